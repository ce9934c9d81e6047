//! Complex Schur decomposition, eigenvalue reordering, and Riesz idempotents.
//!
//! `X = Q T Q*` with `Q` unitary and `T` upper triangular, computed by Hessenberg
//! reduction followed by single-shift QR sweeps with Wilkinson shifts. Diagonal
//! entries are reordered with adjacent Givens swaps.

use nalgebra::linalg::Hessenberg;

use super::{c64, identity, validate, Mat, C64};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct ComplexSchur {
    pub q: Mat,
    pub t: Mat,
}

/// Rotation `G = [[c, s], [-conj(s), c]]` with `G [f; g] = [r; 0]`.
fn givens(f: C64, g: C64) -> (f64, C64) {
    let fa = f.norm();
    let ga = g.norm();
    if ga == 0.0 {
        return (1.0, C64::default());
    }
    if fa == 0.0 {
        return (0.0, g.conj() / ga);
    }
    let rho = fa.hypot(ga);
    (fa / rho, (f / fa) * g.conj() / rho)
}

/// Rows `k, k+1` ← `G · rows`, over columns `cols`.
fn rotate_rows(m: &mut Mat, k: usize, c: f64, s: C64, cols: std::ops::Range<usize>) {
    for j in cols {
        let a = m[(k, j)];
        let b = m[(k + 1, j)];
        m[(k, j)] = a * c + s * b;
        m[(k + 1, j)] = -s.conj() * a + b * c;
    }
}

/// Columns `k, k+1` ← `columns · G*`, over rows `rows`.
fn rotate_cols(m: &mut Mat, k: usize, c: f64, s: C64, rows: std::ops::Range<usize>) {
    for i in rows {
        let a = m[(i, k)];
        let b = m[(i, k + 1)];
        m[(i, k)] = a * c + b * s.conj();
        m[(i, k + 1)] = -a * s + b * c;
    }
}

fn wilkinson_shift(h: &Mat, hi: usize) -> C64 {
    let a = h[(hi - 1, hi - 1)];
    let b = h[(hi - 1, hi)];
    let c = h[(hi, hi - 1)];
    let d = h[(hi, hi)];
    let half = (a - d) * 0.5;
    let disc = (half * half + b * c).sqrt();
    let mid = (a + d) * 0.5;
    let (m1, m2) = (mid + disc, mid - disc);
    if (m1 - d).norm() <= (m2 - d).norm() {
        m1
    } else {
        m2
    }
}

pub fn complex_schur(x: &Mat) -> Result<ComplexSchur> {
    let n = validate(x)?;
    if n <= 1 {
        return Ok(ComplexSchur {
            q: identity(n),
            t: x.clone(),
        });
    }
    let scale = x.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok(ComplexSchur {
            q: identity(n),
            t: x.clone(),
        });
    }

    let (mut q, mut h) = Hessenberg::new(x.unscale(scale)).unpack();
    for j in 0..n {
        for i in (j + 2)..n {
            h[(i, j)] = C64::default();
        }
    }
    let frob = h.norm();
    let eps = f64::EPSILON;

    let mut hi = n - 1;
    let mut iter = 0usize;
    let mut total = 0usize;
    while hi > 0 {
        let mut lo = hi;
        while lo > 0 {
            let sub = h[(lo, lo - 1)].norm();
            let mut diag = h[(lo - 1, lo - 1)].norm() + h[(lo, lo)].norm();
            if diag == 0.0 {
                diag = frob;
            }
            if sub <= eps * diag {
                h[(lo, lo - 1)] = C64::default();
                break;
            }
            lo -= 1;
        }
        if lo == hi {
            hi -= 1;
            iter = 0;
            continue;
        }

        iter += 1;
        total += 1;
        if total > 100 * n {
            return Err(Error::NoConvergence("complex Schur iteration"));
        }
        let shift = if iter.is_multiple_of(10) {
            // exceptional shift to break cycles
            h[(hi, hi)] + c64(0.75 * h[(hi, hi - 1)].norm(), 0.0)
        } else {
            wilkinson_shift(&h, hi)
        };

        let mut f = h[(lo, lo)] - shift;
        let mut g = h[(lo + 1, lo)];
        for k in lo..hi {
            let (c, s) = givens(f, g);
            let start = if k > lo { k - 1 } else { lo };
            rotate_rows(&mut h, k, c, s, start..n);
            rotate_cols(&mut h, k, c, s, 0..(k + 3).min(hi + 1));
            rotate_cols(&mut q, k, c, s, 0..n);
            if k > lo {
                h[(k + 1, k - 1)] = C64::default();
            }
            if k + 1 < hi {
                f = h[(k + 1, k)];
                g = h[(k + 2, k)];
            }
        }
    }

    for j in 0..n {
        for i in (j + 1)..n {
            h[(i, j)] = C64::default();
        }
    }
    Ok(ComplexSchur {
        q,
        t: h.scale(scale),
    })
}

impl ComplexSchur {
    pub fn dim(&self) -> usize {
        self.t.nrows()
    }

    pub fn eigenvalues(&self) -> Vec<C64> {
        (0..self.dim()).map(|i| self.t[(i, i)]).collect()
    }

    pub fn reconstruct(&self) -> Mat {
        &self.q * &self.t * self.q.adjoint()
    }

    /// Exchanges diagonal entries `k` and `k + 1`.
    pub fn swap_adjacent(&mut self, k: usize) {
        let n = self.dim();
        let t11 = self.t[(k, k)];
        let t22 = self.t[(k + 1, k + 1)];
        let (c, s) = givens(self.t[(k, k + 1)], t22 - t11);
        rotate_rows(&mut self.t, k, c, s, k..n);
        rotate_cols(&mut self.t, k, c, s, 0..k + 2);
        rotate_cols(&mut self.q, k, c, s, 0..n);
        self.t[(k + 1, k)] = C64::default();
    }

    /// Moves the selected diagonal entries to the leading positions, keeping
    /// relative order within both groups. Returns the number selected.
    pub fn move_to_front(&mut self, selected: &[bool]) -> usize {
        let mut labels = selected.to_vec();
        let mut target = 0;
        for pos in 0..labels.len() {
            if !labels[pos] {
                continue;
            }
            for k in (target..pos).rev() {
                self.swap_adjacent(k);
                labels.swap(k, k + 1);
            }
            target += 1;
        }
        target
    }

    /// Spectral (Riesz) idempotent for the selected eigenvalues: the projection
    /// onto their invariant subspace along the complementary one. Selected and
    /// unselected eigenvalues must be disjoint.
    pub fn riesz_idempotent(&self, selected: &[bool]) -> Mat {
        let n = self.dim();
        let mut ordered = self.clone();
        let m = ordered.move_to_front(selected);
        if m == 0 {
            return Mat::zeros(n, n);
        }
        if m == n {
            return identity(n);
        }
        let t = &ordered.t;
        let t11 = t.view((0, 0), (m, m)).into_owned();
        let t12 = t.view((0, m), (m, n - m)).into_owned();
        let t22 = t.view((m, m), (n - m, n - m)).into_owned();
        let r = solve_triangular_sylvester(&t11, &t22, &(-t12));
        let mut block = Mat::zeros(n, n);
        for i in 0..m {
            block[(i, i)] = c64(1.0, 0.0);
        }
        block.view_mut((0, m), (m, n - m)).copy_from(&(-r));
        &ordered.q * block * ordered.q.adjoint()
    }
}

/// Solves `A R − R B = C` for upper triangular `A` (m×m) and `B` (q×q) with
/// disjoint diagonals.
pub fn solve_triangular_sylvester(a: &Mat, b: &Mat, c: &Mat) -> Mat {
    let m = a.nrows();
    let q = b.nrows();
    let mut r = Mat::zeros(m, q);
    for j in 0..q {
        let mut rhs: Vec<C64> = (0..m).map(|i| c[(i, j)]).collect();
        for l in 0..j {
            let blj = b[(l, j)];
            for (i, v) in rhs.iter_mut().enumerate() {
                *v += r[(i, l)] * blj;
            }
        }
        let bjj = b[(j, j)];
        for i in (0..m).rev() {
            let mut acc = rhs[i];
            for t in (i + 1)..m {
                acc -= a[(i, t)] * r[(t, j)];
            }
            r[(i, j)] = acc / (a[(i, i)] - bjj);
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mat::{from_real_rows, opnorm};
    use crate::testutil::random_complex;

    fn assert_schur(x: &Mat, s: &ComplexSchur) {
        let n = x.nrows();
        let scale = opnorm(x).max(1e-300);
        assert!(opnorm(&(s.reconstruct() - x)) <= 1e-13 * scale * n as f64);
        assert!(opnorm(&(s.q.adjoint() * &s.q - identity(n))) <= 1e-13 * n as f64);
        for j in 0..n {
            for i in (j + 1)..n {
                assert_eq!(s.t[(i, j)], C64::default());
            }
        }
    }

    #[test]
    fn decomposes_random_matrices() {
        for seed in 0..40 {
            let n = 1 + (seed as usize % 12);
            let x = random_complex(n, seed);
            assert_schur(&x, &complex_schur(&x).unwrap());
        }
    }

    #[test]
    fn decomposes_defective_and_structured() {
        let jordan = from_real_rows(&[&[2.0, 1.0, 0.0], &[0.0, 2.0, 1.0], &[0.0, 0.0, 2.0]]);
        assert_schur(&jordan, &complex_schur(&jordan).unwrap());
        let rotation = from_real_rows(&[&[0.0, -1.0], &[1.0, 0.0]]);
        let s = complex_schur(&rotation).unwrap();
        assert_schur(&rotation, &s);
        let mut ev = s.eigenvalues();
        ev.sort_by(|a, b| a.im.total_cmp(&b.im));
        assert!((ev[0] - c64(0.0, -1.0)).norm() < 1e-14);
        assert!((ev[1] - c64(0.0, 1.0)).norm() < 1e-14);
        let zero = Mat::zeros(3, 3);
        assert_schur(&zero, &complex_schur(&zero).unwrap());
    }

    #[test]
    fn reordering_preserves_decomposition() {
        let x = random_complex(7, 99);
        let mut s = complex_schur(&x).unwrap();
        let before = s.eigenvalues();
        let selected: Vec<bool> = (0..7).map(|i| i % 3 == 2).collect();
        let m = s.move_to_front(&selected);
        assert_eq!(m, 2);
        assert_schur(&x, &s);
        let after = s.eigenvalues();
        assert!((after[0] - before[2]).norm() < 1e-12);
        assert!((after[1] - before[5]).norm() < 1e-12);
    }

    #[test]
    fn sylvester_residual() {
        let mut a = random_complex(4, 1);
        let mut b = random_complex(3, 2);
        for j in 0..4 {
            for i in (j + 1)..4 {
                a[(i, j)] = C64::default();
            }
            a[(j, j)] += c64(5.0, 0.0);
        }
        for j in 0..3 {
            for i in (j + 1)..3 {
                b[(i, j)] = C64::default();
            }
        }
        let c = Mat::from_fn(4, 3, |i, j| c64(i as f64 - j as f64, 0.5));
        let r = solve_triangular_sylvester(&a, &b, &c);
        assert!(opnorm(&(&a * &r - &r * &b - &c)) < 1e-12);
    }

    #[test]
    fn riesz_idempotent_two_by_two() {
        let x = from_real_rows(&[&[0.0, 1.0], &[0.0, 2.0]]);
        let s = complex_schur(&x).unwrap();
        let sel: Vec<bool> = s.eigenvalues().iter().map(|z| z.norm() < 1.0).collect();
        let e = s.riesz_idempotent(&sel);
        let expected = from_real_rows(&[&[1.0, -0.5], &[0.0, 0.0]]);
        assert!(opnorm(&(e - expected)) < 1e-14);
    }
}
