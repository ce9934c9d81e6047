//! Nilpotent truncation through a nested projection chain.
//!
//! For an approximately nilpotent `N` of order `k` the chain is a flag
//! `I = E₀ ≥ E₁ ≥ … ≥ E_{k−1}` where `E_j` projects onto the approximate
//! co-range of `N^j`, i.e. the orthogonal complement of its approximate
//! kernel. `N` maps `ran(I − E_j)` (approximately `ker N^j`) into
//! `ran(I − E_{j−1})`, so in an adapted basis `N` is strictly block upper
//! triangular up to small terms. Truncation keeps exactly those blocks:
//!
//! `N′ = Σ_{j=1}^{k−1} (E_{j−1} − E_j) X D_j`,  with `D_j = E_j`.
//!
//! Taking `D_j = E_j` collapses the `D_j ≤ E_j` slack; nothing at matrix scale
//! needs it.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mat::io::serde_mat;
use crate::mat::{hstack, mat_pow, opnorm, projection_from_basis, right_singular, validate, Mat};

#[derive(Clone, Debug)]
pub struct ChainOptions {
    /// Fixed relative cut; `None` takes the widest singular value gap between
    /// two noise estimates derived from `‖N^k‖`.
    pub tau: Option<f64>,
    /// Largest accepted ratio `σ_{r+1}/σ_r` across the cut.
    pub gap_ratio_max: f64,
    /// Refuse ambiguous cuts instead of taking them anyway.
    pub enforce_gap: bool,
}

impl Default for ChainOptions {
    fn default() -> Self {
        ChainOptions {
            tau: None,
            gap_ratio_max: 0.5,
            enforce_gap: true,
        }
    }
}

/// Flag of orthogonal levels `F₁, …, F_{k−1}, B_{k−1}` stored as the columns
/// of one unitary. `E_j` projects onto the levels after `F_j`.
#[derive(Clone, Debug, Serialize)]
pub struct NilChain {
    pub order: usize,
    /// Upper end of the cut range.
    pub tau: f64,
    #[serde(with = "serde_mat")]
    pub flag: Mat,
    /// Column counts of the `k` levels.
    pub level_sizes: Vec<usize>,
    /// Gap ratio observed at each cut, `0` where no cut was needed.
    pub gap_ratios: Vec<f64>,
}

impl NilChain {
    pub fn dim(&self) -> usize {
        self.flag.nrows()
    }

    fn offset(&self, level: usize) -> usize {
        self.level_sizes[..level].iter().sum()
    }

    /// `E_j` for `j = 0..k`; `E₀ = I`.
    pub fn e(&self, j: usize) -> Mat {
        let n = self.dim();
        let start = self.offset(j);
        projection_from_basis(&self.flag.columns(start, n - start).into_owned())
    }

    /// `D_j`, equal to `E_j`.
    pub fn d(&self, j: usize) -> Mat {
        self.e(j)
    }
}

/// `clamp(10·‖N^k‖^{1/k}/‖N‖, 1e-8, 0.3)`: the largest singular value of
/// `(N/‖N‖)^j` that can still be noise.
pub fn default_tau(n: &Mat, k: usize) -> f64 {
    let norm = opnorm(n);
    if norm == 0.0 {
        return 1e-8;
    }
    let ratio = opnorm(&mat_pow(&n.unscale(norm), k)).powf(1.0 / k as f64);
    (10.0 * ratio).clamp(1e-8, 0.3)
}

/// `10·‖N^k‖/‖N‖^k`, a lower estimate of the noise in `(N/‖N‖)^j`.
fn noise_floor(n: &Mat, k: usize) -> f64 {
    let norm = opnorm(n);
    if norm == 0.0 {
        return 0.0;
    }
    10.0 * opnorm(&mat_pow(&n.unscale(norm), k))
}

/// Rank kept at one level: the widest gap in `sigma` with the cut between
/// `lo` and `hi`, at most `cap`.
fn pick_rank(sigma: &[f64], lo: f64, hi: f64, cap: usize) -> usize {
    let r_max = sigma.iter().filter(|&&s| s > lo).count().min(cap);
    let r_min = sigma.iter().filter(|&&s| s >= hi).count().min(r_max);
    let upper = |r: usize| if r == 0 { hi } else { sigma[r - 1] };
    let lower = |r: usize| sigma.get(r).copied().unwrap_or(0.0).max(lo * 1e-3).max(f64::MIN_POSITIVE);
    (r_min..=r_max)
        .max_by(|&a, &b| (upper(a) / lower(a)).total_cmp(&(upper(b) / lower(b))))
        .unwrap_or(r_max)
}

pub fn build_chain(n: &Mat, k: usize, opts: &ChainOptions) -> Result<NilChain> {
    let dim = validate(n)?;
    if k < 2 {
        return Err(Error::InvalidArgument(format!("nilpotency order must be at least 2, got {k}")));
    }
    let tau = opts.tau.unwrap_or_else(|| default_tau(n, k));
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidArgument(format!("chain threshold must lie in (0, 1), got {tau}")));
    }
    let norm = opnorm(n);
    if norm == 0.0 {
        let mut level_sizes = vec![0; k];
        level_sizes[0] = dim;
        return Ok(NilChain {
            order: k,
            tau,
            flag: crate::mat::identity(dim),
            level_sizes,
            gap_ratios: vec![0.0; k - 1],
        });
    }

    // singular values of (N/‖N‖)^j are cut between the noise estimates; an
    // explicit τ fixes the cut. Never below roundoff, where the gap test
    // would compare noise.
    let floor = crate::mat::rtol(dim);
    let (lo, hi) = match opts.tau {
        Some(t) => (t.max(floor), t.max(floor)),
        None => (noise_floor(n, k).clamp(floor, tau), tau.max(floor)),
    };
    let unit = n.unscale(norm);
    let mut power = crate::mat::identity(dim);
    let mut rest = crate::mat::identity(dim);
    let mut levels = Vec::with_capacity(k);
    let mut gap_ratios = Vec::with_capacity(k - 1);
    for j in 1..k {
        power = &power * &unit;
        let (sigma, v) = right_singular(&(&power * &rest));
        // rank of N^j for a nilpotent of order k is at most n − ⌈jn/k⌉
        let cap = dim - (j * dim).div_ceil(k);
        let r = pick_rank(&sigma, lo, hi, cap);
        let ratio = if r > 0 && r < sigma.len() { sigma[r] / sigma[r - 1] } else { 0.0 };
        if opts.enforce_gap && ratio >= opts.gap_ratio_max {
            return Err(Error::ChainGapFailure { level: j, ratio });
        }
        gap_ratios.push(ratio);
        let m = rest.ncols();
        levels.push(&rest * v.columns(r, m - r));
        rest = &rest * v.columns(0, r);
    }
    levels.push(rest);
    let level_sizes = levels.iter().map(|b| b.ncols()).collect();
    Ok(NilChain {
        order: k,
        tau,
        flag: hstack(&levels, dim),
        level_sizes,
        gap_ratios,
    })
}

/// Numerical nilpotency budget `1e-11 · ‖X‖^k`.
pub fn nilpotency_budget(x_norm: f64, k: usize) -> f64 {
    1e-11 * x_norm.powi(k as i32)
}

/// Exact nilpotent of order `≤ k` obtained by keeping the blocks of `X` that
/// descend the flag. If the kept part is longer than `X` it is rescaled to
/// `‖X‖`, which keeps it nilpotent.
pub fn truncate_to_nilpotent(x: &Mat, chain: &NilChain) -> Result<Mat> {
    validate(x)?;
    crate::mat::ensure_same_dim(x, chain.dim())?;
    let w = &chain.flag;
    let mut block = w.adjoint() * x * w;
    let k = chain.order;
    let bounds: Vec<usize> = (0..=k).map(|l| chain.offset(l)).collect();
    for a in 0..k {
        for b in 0..=a {
            let (r0, r1) = (bounds[a], bounds[a + 1]);
            let (c0, c1) = (bounds[b], bounds[b + 1]);
            block.view_mut((r0, c0), (r1 - r0, c1 - c0)).fill(Default::default());
        }
    }
    let mut out = w * block * w.adjoint();
    let x_norm = opnorm(x);
    let out_norm = opnorm(&out);
    if out_norm > x_norm {
        out *= crate::mat::c64(x_norm / out_norm, 0.0);
    }
    let residual = opnorm(&mat_pow(&out, k));
    let budget = nilpotency_budget(x_norm, k);
    if residual > budget {
        return Err(Error::Invariant(format!(
            "truncated nilpotent has ‖N^k‖ = {residual:.3e} above {budget:.3e}"
        )));
    }
    Ok(out)
}

/// Least `k` with `‖X^k‖ ≤ tol·‖X‖^k`, or `dim + 1` if there is none.
pub fn nilpotency_order(x: &Mat, tol: f64) -> usize {
    let n = x.nrows();
    let norm = opnorm(x);
    if norm == 0.0 {
        return 1;
    }
    let unit = x.unscale(norm);
    let mut power = unit.clone();
    for k in 1..=n {
        if opnorm(&power) <= tol {
            return k;
        }
        power = &power * &unit;
    }
    n + 1
}
