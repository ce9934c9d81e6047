//! Canonical data of an (approximately) algebraic matrix: spectral
//! idempotents `eᵢ`, metric `s = Σ eᵢ* eᵢ`, orthogonal projections
//! `pᵢ = s^{1/2} eᵢ s^{-1/2}` and the similarity image `c = s^{1/2} X s^{-1/2}`.
//!
//! Everything is computed from the true spectrum of `X`; the polynomial only
//! decides how eigenvalues are grouped.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mat::io::{serde_mat, serde_mats};
use crate::mat::schur::{complex_schur, ComplexSchur};
use crate::mat::{c64, herm_eig_unchecked, hermitian_part, identity, opnorm, validate, HermitianEig, Mat, C64, PTOL};
use crate::poly::Polynomial;

/// Default idempotent tolerance `1e-8 · dim`.
pub fn default_stol(dim: usize) -> f64 {
    1e-8 * dim.max(1) as f64
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectralData {
    #[serde(with = "serde_mats")]
    pub idempotents: Vec<Mat>,
    #[serde(with = "serde_mat")]
    pub metric: Mat,
    #[serde(with = "serde_mats")]
    pub projections: Vec<Mat>,
    #[serde(with = "serde_mat")]
    pub similarity_image: Mat,
    pub cond_s: f64,
    /// Root index of each eigenvalue, in Schur diagonal order.
    pub assignment: Vec<usize>,
    #[serde(skip)]
    metric_eig: HermitianEig,
}

impl SpectralData {
    pub fn dim(&self) -> usize {
        self.metric.nrows()
    }

    /// `(s_μ^{1/2}, s_μ^{-1/2})` for the blended metric `s_μ = (1−μ)s + μI`.
    /// `μ = 0` gives the metric itself, `μ = 1` the identity.
    pub fn metric_roots(&self, mu: f64) -> (Mat, Mat) {
        let blend = |t: f64| (1.0 - mu) * t + mu;
        (
            self.metric_eig.map(|t| c64(blend(t).sqrt(), 0.0)),
            self.metric_eig.map(|t| c64(blend(t).sqrt().recip(), 0.0)),
        )
    }
}

/// Eigenvalues of `X` together with their nearest-root assignment.
#[derive(Clone, Debug)]
pub struct Clustering {
    pub eigenvalues: Vec<C64>,
    pub assignment: Vec<usize>,
}

/// Assigns every eigenvalue to its nearest root. With `enforce` set, an
/// eigenvalue at distance `≥ cluster_radius` is rejected; the worst one is
/// reported.
fn assign(eigenvalues: &[C64], p: &Polynomial, enforce: bool) -> Result<Vec<usize>> {
    let roots = p.roots();
    let radius = p.cluster_radius();
    let mut worst: Option<(f64, Error)> = None;
    let mut assignment = Vec::with_capacity(eigenvalues.len());
    for &z in eigenvalues {
        let mut order: Vec<(f64, usize)> = roots.iter().enumerate().map(|(i, r)| ((z - r.value).norm(), i)).collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (distance, nearest) = order[0];
        assignment.push(nearest);
        if enforce && (distance >= radius || distance.is_nan()) && worst.as_ref().is_none_or(|(d, _)| distance > *d) {
            let err = Error::ClusterAmbiguous {
                eigenvalue: z,
                nearest: roots[nearest].value,
                second: order.get(1).map(|&(_, i)| roots[i].value),
                distance,
            };
            worst = Some((distance, err));
        }
    }
    match worst {
        Some((_, err)) => Err(err),
        None => Ok(assignment),
    }
}

pub fn cluster_eigenvalues(x: &Mat, p: &Polynomial) -> Result<Clustering> {
    let schur = complex_schur(x)?;
    let eigenvalues = schur.eigenvalues();
    let assignment = assign(&eigenvalues, p, true)?;
    Ok(Clustering { eigenvalues, assignment })
}

pub fn spectral_data(x: &Mat, p: &Polynomial, stol: f64) -> Result<SpectralData> {
    build(x, p, stol, true)
}

/// Same as [`spectral_data`] but every eigenvalue is assigned to its nearest
/// root regardless of distance. Used for forced runs outside the basin.
pub fn spectral_data_forced(x: &Mat, p: &Polynomial, stol: f64) -> Result<SpectralData> {
    build(x, p, stol, false)
}

fn build(x: &Mat, p: &Polynomial, stol: f64, enforce: bool) -> Result<SpectralData> {
    let n = validate(x)?;
    let schur: ComplexSchur = complex_schur(x)?;
    let assignment = assign(&schur.eigenvalues(), p, enforce)?;

    let idempotents: Vec<Mat> = (0..p.roots().len())
        .map(|i| {
            let selected: Vec<bool> = assignment.iter().map(|&a| a == i).collect();
            schur.riesz_idempotent(&selected)
        })
        .collect();

    let mut metric = Mat::zeros(n, n);
    for e in &idempotents {
        metric += e.adjoint() * e;
    }
    let metric = hermitian_part(&metric);
    let metric_eig = herm_eig_unchecked(&metric);
    if n > 0 && metric_eig.min() < PTOL * metric_eig.max().max(1.0) {
        return Err(Error::MetricSingular {
            min_eigenvalue: metric_eig.min(),
        });
    }
    let cond_s = if n == 0 { 1.0 } else { metric_eig.max() / metric_eig.min() };

    let sqrt = metric_eig.map(|t| c64(t.sqrt(), 0.0));
    let inv_sqrt = metric_eig.map(|t| c64(t.sqrt().recip(), 0.0));
    let raw: Vec<Mat> = idempotents.iter().map(|e| &sqrt * e * &inv_sqrt).collect();
    let similarity_image = &sqrt * x * &inv_sqrt;

    let tol = stol * cond_s.max(1.0);
    let check = |quantity: &'static str, defect: f64, scale: f64| -> Result<()> {
        let tol = tol * scale.max(1.0);
        if defect > tol || defect.is_nan() {
            return Err(Error::IllConditioned { quantity, defect, tol });
        }
        Ok(())
    };

    let eye = identity(n);
    let sum_e: Mat = idempotents.iter().fold(Mat::zeros(n, n), |acc, e| acc + e);
    check("resolution of identity", opnorm(&(sum_e - &eye)), 1.0)?;
    for (i, ei) in idempotents.iter().enumerate() {
        for (j, ej) in idempotents.iter().enumerate() {
            let target = if i == j { ei.clone() } else { Mat::zeros(n, n) };
            check("idempotent products", opnorm(&(ei * ej - target)), 1.0)?;
        }
    }
    for q in &raw {
        check("projection symmetry", opnorm(&(q - q.adjoint())), 1.0)?;
    }
    let projections: Vec<Mat> = raw.iter().map(hermitian_part).collect();
    for q in &projections {
        check("projection idempotence", opnorm(&(q * q - q)), 1.0)?;
    }
    let c_norm = opnorm(&similarity_image);
    let diagonal: Mat = projections
        .iter()
        .fold(Mat::zeros(n, n), |acc, q| acc + q * &similarity_image * q);
    check("block diagonality", opnorm(&(diagonal - &similarity_image)), c_norm)?;

    Ok(SpectralData {
        idempotents,
        metric,
        projections,
        similarity_image,
        cond_s,
        assignment,
        metric_eig,
    })
}

/// Orthonormal bases for a near resolution of identity `F₁, …, F_m`.
///
/// The Hermitian matrix `A = Σ i·Fᵢ` (labels from 1) has eigenvalues near the
/// integers `1..=m`; the eigenvectors in the cluster at `i` span `ran Qᵢ`.
/// Each returned basis is `n × rank(Qᵢ)` and together they form a unitary.
pub fn orthonormal_resolution(family: &[Mat]) -> Result<Vec<Mat>> {
    let Some(first) = family.first() else {
        return Err(Error::InvalidArgument("empty projection family".into()));
    };
    let n = validate(first)?;
    let mut a = Mat::zeros(n, n);
    for (i, f) in family.iter().enumerate() {
        validate(f)?;
        crate::mat::ensure_same_dim(f, n)?;
        a += hermitian_part(f).scale((i + 1) as f64);
    }
    let eig = herm_eig_unchecked(&a);
    let m = family.len();
    let mut labels = Vec::with_capacity(n);
    for &lambda in &eig.eigenvalues {
        let nearest = lambda.round().clamp(1.0, m as f64);
        let distance = (lambda - nearest).abs();
        if distance >= 1.0 / 3.0 {
            let second = if lambda > nearest { nearest + 1.0 } else { nearest - 1.0 };
            return Err(Error::ClusterAmbiguous {
                eigenvalue: c64(lambda, 0.0),
                nearest: c64(nearest, 0.0),
                second: (1.0..=m as f64).contains(&second).then(|| c64(second, 0.0)),
                distance,
            });
        }
        labels.push(nearest as usize - 1);
    }
    Ok((0..m)
        .map(|i| {
            let cols: Vec<usize> = (0..n).filter(|&j| labels[j] == i).collect();
            eig.eigenvectors.select_columns(&cols)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mat::{from_real_diagonal, from_real_rows, projection_from_basis};
    use crate::poly::Polynomial;

    fn close(a: &Mat, b: &Mat, tol: f64) -> bool {
        opnorm(&(a - b)) <= tol
    }

    #[test]
    fn two_by_two_example() {
        let x = from_real_rows(&[&[0.0, 1.0], &[0.0, 2.0]]);
        let p = Polynomial::from_real(&[(0.0, 1), (2.0, 1)]).unwrap();
        let sd = spectral_data(&x, &p, default_stol(2)).unwrap();
        assert!(close(&sd.idempotents[0], &from_real_rows(&[&[1.0, -0.5], &[0.0, 0.0]]), 1e-14));
        assert!(close(&sd.idempotents[1], &from_real_rows(&[&[0.0, 0.5], &[0.0, 1.0]]), 1e-14));
        assert!(close(&sd.metric, &from_real_rows(&[&[1.0, -0.5], &[-0.5, 1.5]]), 1e-14));
        for q in &sd.projections {
            assert!(close(&(q * q), q, 1e-12));
        }
    }

    #[test]
    fn normal_input_is_its_own_image() {
        let x = from_real_diagonal(&[1.0, -1.0, 1.0]);
        let p = Polynomial::from_real(&[(1.0, 1), (-1.0, 1)]).unwrap();
        let sd = spectral_data(&x, &p, default_stol(3)).unwrap();
        assert!(close(&sd.metric, &identity(3), 1e-14));
        assert!(close(&sd.similarity_image, &x, 1e-14));
        assert!(close(&sd.projections[0], &from_real_diagonal(&[1.0, 0.0, 1.0]), 1e-14));
        assert!((sd.cond_s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_cluster() {
        let x = identity(3).scale(0.5);
        let p = Polynomial::from_real(&[(0.5, 2), (-0.5, 2)]).unwrap();
        let sd = spectral_data(&x, &p, default_stol(3)).unwrap();
        assert!(close(&sd.idempotents[0], &identity(3), 1e-14));
        assert!(close(&sd.idempotents[1], &Mat::zeros(3, 3), 1e-14));
        assert!(close(&sd.metric, &identity(3), 1e-14));
    }

    #[test]
    fn clustering_examples() {
        let p = Polynomial::from_real(&[(0.0, 1), (2.0, 1)]).unwrap();
        let c = cluster_eigenvalues(&from_real_diagonal(&[0.01, 1.99]), &p).unwrap();
        let mut pairs: Vec<(f64, usize)> = c.eigenvalues.iter().map(|z| z.re).zip(c.assignment).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert_eq!(pairs.iter().map(|x| x.1).collect::<Vec<_>>(), vec![0, 1]);

        match cluster_eigenvalues(&from_real_diagonal(&[1.0]), &p) {
            Err(Error::ClusterAmbiguous { distance, second, .. }) => {
                assert_eq!(distance, 1.0);
                assert!(second.is_some());
            }
            other => panic!("expected ClusterAmbiguous, got {other:?}"),
        }

        let mut jordan = from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        jordan[(1, 0)] = c64(0.001, 0.0);
        let c = cluster_eigenvalues(&jordan, &Polynomial::from_real(&[(0.0, 2)]).unwrap()).unwrap();
        assert_eq!(c.assignment, vec![0, 0]);
    }

    #[test]
    fn forced_mode_skips_radius_check() {
        let p = Polynomial::from_real(&[(0.0, 1), (2.0, 1)]).unwrap();
        let x = from_real_diagonal(&[0.9, 2.0]);
        assert!(spectral_data(&x, &p, 1e-8).is_err());
        let sd = spectral_data_forced(&x, &p, 1e-8).unwrap();
        assert!(close(&sd.idempotents[0], &from_real_diagonal(&[1.0, 0.0]), 1e-14));
    }

    #[test]
    fn metric_blend_endpoints() {
        let x = from_real_rows(&[&[0.0, 1.0], &[0.0, 2.0]]);
        let p = Polynomial::from_real(&[(0.0, 1), (2.0, 1)]).unwrap();
        let sd = spectral_data(&x, &p, 1e-8).unwrap();
        let (r, ri) = sd.metric_roots(0.0);
        assert!(close(&(&r * &r), &sd.metric, 1e-13));
        assert!(close(&(&r * &ri), &identity(2), 1e-13));
        let (r, _) = sd.metric_roots(1.0);
        assert!(close(&r, &identity(2), 1e-14));
    }

    #[test]
    fn resolution_examples() {
        let f1 = from_real_diagonal(&[0.99, 0.02]);
        let f2 = identity(2) - &f1;
        let bases = orthonormal_resolution(&[f1, f2]).unwrap();
        assert!(close(&projection_from_basis(&bases[0]), &from_real_diagonal(&[1.0, 0.0]), 1e-14));
        assert!(close(&projection_from_basis(&bases[1]), &from_real_diagonal(&[0.0, 1.0]), 1e-14));

        let half = identity(1).scale(0.5);
        assert!(matches!(
            orthonormal_resolution(&[half.clone(), half]),
            Err(Error::ClusterAmbiguous { .. })
        ));
    }
}
