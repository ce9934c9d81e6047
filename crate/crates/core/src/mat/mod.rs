//! Dense complex matrix kernel.
//!
//! Matrices are plain `nalgebra` dense matrices over `Complex<f64>`. All
//! tolerances are relative to the input norm and dimension.

pub mod io;
pub mod schur;

use nalgebra::{DMatrix, SymmetricEigen, SVD};

use crate::error::{Error, Result};

pub use nalgebra::Complex;

pub type C64 = Complex<f64>;
pub type Mat = DMatrix<C64>;

/// Hermitian defect tolerance, relative to the norm.
pub const HTOL: f64 = 1e-10;
/// Positivity tolerance for square roots and similarities.
pub const PTOL: f64 = 1e-10;

/// Reconstruction tolerance `1e-12 * dim`.
pub fn rtol(dim: usize) -> f64 {
    1e-12 * dim.max(1) as f64
}

pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(n: usize) -> Mat {
    Mat::identity(n, n)
}

/// Builds a matrix from real row-major entries.
pub fn from_real_rows(rows: &[&[f64]]) -> Mat {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    Mat::from_fn(n, m, |i, j| c64(rows[i][j], 0.0))
}

pub fn from_real_diagonal(d: &[f64]) -> Mat {
    let n = d.len();
    Mat::from_fn(n, n, |i, j| if i == j { c64(d[i], 0.0) } else { C64::default() })
}

pub fn ensure_square(x: &Mat) -> Result<usize> {
    if x.nrows() != x.ncols() {
        return Err(Error::NotSquare {
            rows: x.nrows(),
            cols: x.ncols(),
        });
    }
    Ok(x.nrows())
}

/// Square with finite entries.
pub fn validate(x: &Mat) -> Result<usize> {
    let n = ensure_square(x)?;
    if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(n)
}

pub fn ensure_same_dim(x: &Mat, n: usize) -> Result<()> {
    if x.nrows() != n || x.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: x.nrows().max(x.ncols()),
        });
    }
    Ok(())
}

/// Singular values in descending order.
pub fn singular_values(x: &Mat) -> Vec<f64> {
    if x.is_empty() {
        return Vec::new();
    }
    let mut sv: Vec<f64> = SVD::new_unordered(x.clone(), false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Singular values (descending) with the matching right singular vectors as
/// columns of a unitary. Requires `rows >= cols`.
pub fn right_singular(x: &Mat) -> (Vec<f64>, Mat) {
    let m = x.ncols();
    assert!(x.nrows() >= m, "right_singular needs rows >= cols");
    if m == 0 {
        return (Vec::new(), Mat::zeros(0, 0));
    }
    let svd = SVD::new_unordered(x.clone(), false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let values = order.iter().map(|&i| svd.singular_values[i]).collect();
    let v = Mat::from_fn(m, m, |i, j| v_t[(order[j], i)].conj());
    (values, v)
}

/// Operator norm: the largest singular value.
pub fn opnorm(x: &Mat) -> f64 {
    singular_values(x).first().copied().unwrap_or(0.0)
}

/// Ratio of extreme singular values; infinite for singular input.
pub fn condition_number(x: &Mat) -> f64 {
    let sv = singular_values(x);
    match (sv.first(), sv.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => 1.0,
    }
}

pub fn hermitian_part(x: &Mat) -> Mat {
    (x + x.adjoint()).scale(0.5)
}

/// `opnorm(X - X*) / opnorm(X)`, zero for the zero matrix.
pub fn hermitian_defect(x: &Mat) -> f64 {
    let norm = opnorm(x);
    if norm == 0.0 {
        return 0.0;
    }
    opnorm(&(x - x.adjoint())) / norm
}

pub fn mat_pow(x: &Mat, k: usize) -> Mat {
    let n = x.nrows();
    let mut acc = identity(n);
    for _ in 0..k {
        acc = &acc * x;
    }
    acc
}

/// Eigendecomposition of a Hermitian matrix with ascending eigenvalues.
#[derive(Clone, Debug)]
pub struct HermitianEig {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Mat,
}

impl HermitianEig {
    /// `U f(Λ) U*`.
    pub fn map<F: Fn(f64) -> C64>(&self, f: F) -> Mat {
        let u = &self.eigenvectors;
        let mut scaled = u.clone();
        for (j, &lambda) in self.eigenvalues.iter().enumerate() {
            let fj = f(lambda);
            for z in scaled.column_mut(j).iter_mut() {
                *z *= fj;
            }
        }
        scaled * u.adjoint()
    }

    pub fn reconstruct(&self) -> Mat {
        self.map(|t| c64(t, 0.0))
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }
}

/// Requires `‖X − X*‖ ≤ HTOL·‖X‖`; decomposes the Hermitian part.
pub fn herm_eig(x: &Mat) -> Result<HermitianEig> {
    validate(x)?;
    let defect = hermitian_defect(x);
    if defect > HTOL {
        return Err(Error::NotHermitian { defect });
    }
    Ok(herm_eig_unchecked(&hermitian_part(x)))
}

/// Decomposes `(X + X*)/2` without checking the defect.
pub(crate) fn herm_eig_unchecked(x: &Mat) -> HermitianEig {
    let n = x.nrows();
    if n == 0 {
        return HermitianEig {
            eigenvalues: Vec::new(),
            eigenvectors: Mat::zeros(0, 0),
        };
    }
    let eig = SymmetricEigen::new(hermitian_part(x));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let eigenvectors = Mat::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    HermitianEig {
        eigenvalues,
        eigenvectors,
    }
}

fn positive_eig(s: &Mat) -> Result<HermitianEig> {
    let eig = herm_eig(s)?;
    let scale = eig.max().max(1.0);
    if eig.min() < PTOL * scale {
        return Err(Error::NotPositiveDefinite {
            eigenvalue: eig.min(),
        });
    }
    Ok(eig)
}

/// Positive square root of a positive definite matrix.
pub fn psd_sqrt(s: &Mat) -> Result<Mat> {
    Ok(positive_eig(s)?.map(|t| c64(t.sqrt(), 0.0)))
}

/// Inverse of the positive square root.
pub fn psd_inv_sqrt(s: &Mat) -> Result<Mat> {
    Ok(positive_eig(s)?.map(|t| c64(t.sqrt().recip(), 0.0)))
}

/// Functional calculus `f(Y) = U f(Λ) U*` for Hermitian `Y`.
pub fn apply_function<F: Fn(f64) -> C64>(y: &Mat, f: F) -> Result<Mat> {
    Ok(herm_eig(y)?.map(f))
}

/// `V X V⁻¹`, with `V⁻¹` computed once.
pub fn similarity(v: &Mat, x: &Mat) -> Result<Mat> {
    let n = validate(v)?;
    ensure_same_dim(x, n)?;
    let cond = condition_number(v);
    if !(cond.is_finite() && cond.recip() >= PTOL) {
        return Err(Error::SingularTransform { cond });
    }
    let v_inv = v
        .clone()
        .try_inverse()
        .ok_or(Error::SingularTransform { cond })?;
    Ok(v * x * v_inv)
}

/// Orthonormal basis matrix `B` to its projection `B B*`.
pub fn projection_from_basis(basis: &Mat) -> Mat {
    basis * basis.adjoint()
}

/// Horizontal concatenation of basis blocks with a common row count.
pub fn hstack(blocks: &[Mat], rows: usize) -> Mat {
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut offset = 0;
    for b in blocks {
        out.view_mut((0, offset), (rows, b.ncols())).copy_from(b);
        offset += b.ncols();
    }
    out
}
