//! The stabilizer: from `X` with `‖p(X)‖` small to a nearby `X′` with
//! `p(X′) = 0` up to rounding and `‖X′‖ ≤ C(1 + captol)`.
//!
//! Both branches work in the frame of the similarity image
//! `c = s^{1/2} X s^{-1/2}`, where the spectral pieces are orthogonal. There
//! the exact solution is assembled from a nilpotent part and a semisimple
//! skeleton, and mapped back through `s^{-1/2}(·)s^{1/2}`:
//!
//! * all roots multiple: each corner `(c − λᵢ)` restricted to `ran pᵢ` is
//!   truncated to an exact nilpotent of order `kᵢ`;
//! * all roots simple and real: the Hermitian part of `c` is pushed through a
//!   clamp function that is constant on a neighborhood of each root.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mat::io::serde_mat;
use crate::mat::{c64, herm_eig_unchecked, hermitian_part, identity, opnorm, rtol, validate, HermitianEig, Mat};
use crate::nilpotent::{build_chain, truncate_to_nilpotent, ChainOptions};
use crate::poly::{self, require_supported, spectral_gap_threshold, Polynomial, Regime};
use crate::spectral::{default_stol, orthonormal_resolution, spectral_data, spectral_data_forced, SpectralData};

#[derive(Clone, Debug, Serialize)]
pub struct LiftOptions {
    /// Idempotent tolerance; `None` means `1e-8 · dim`.
    pub stol: Option<f64>,
    /// Chain threshold; `None` picks it per corner.
    pub tau: Option<f64>,
    pub captol: f64,
    /// Slack on `‖X‖ ≤ C` before a warning is logged.
    pub pretol: f64,
    pub gap_ratio_max: f64,
    /// Skip the basin checks (cluster radius, chain gap, gap threshold) and
    /// construct a solution anyway. Exactness and the norm bound still hold.
    pub force: bool,
}

impl Default for LiftOptions {
    fn default() -> Self {
        LiftOptions {
            stol: None,
            tau: None,
            captol: 1e-9,
            pretol: 1e-6,
            gap_ratio_max: 0.5,
            force: false,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilizationReport {
    #[serde(with = "serde_mat")]
    pub output: Mat,
    pub residual_before: f64,
    pub residual_after: f64,
    pub distance: f64,
    pub norm_before: f64,
    pub norm_after: f64,
    pub regime: Regime,
    pub cond_s: f64,
    /// Contraction `θ` applied to the nilpotent part.
    pub cap_factor: f64,
    /// Blend `μ` of the metric toward the identity used when mapping back.
    pub similarity_blend: f64,
    /// Shrink of the Hermitian lift toward its cluster skeleton.
    pub lift_shrink: f64,
    pub bound: f64,
    pub forced: bool,
}

/// `1e-10 · max(1, ‖X′‖)^deg`.
pub fn exactness_budget(p: &Polynomial, norm: f64) -> f64 {
    1e-10 * norm.max(1.0).powi(p.degree() as i32)
}

/// Piecewise-linear function equal to `tᵢ` on `[tᵢ − r, tᵢ + r]`, constant
/// beyond the outermost roots and linear in between, clipped to `[−C, C]`.
#[derive(Clone, Debug)]
pub struct ClampFunction {
    roots: Vec<f64>,
    radius: f64,
    bound: f64,
}

impl ClampFunction {
    pub fn new(p: &Polynomial, bound: f64) -> Result<Self> {
        if p.regime() != Regime::AllSimpleReal {
            return Err(Error::RegimeMismatch {
                expected: Regime::AllSimpleReal.to_string(),
                found: p.regime().to_string(),
            });
        }
        let mut roots: Vec<f64> = p.roots().iter().map(|r| r.value.re).collect();
        roots.sort_by(f64::total_cmp);
        Ok(ClampFunction {
            roots,
            radius: p.cluster_radius(),
            bound,
        })
    }

    pub fn eval(&self, t: f64) -> f64 {
        let r = &self.roots;
        let value = if t <= r[0] + self.radius {
            r[0]
        } else if t >= r[r.len() - 1] - self.radius {
            r[r.len() - 1]
        } else {
            let i = r.partition_point(|&x| x < t).max(1);
            let (a, b) = (r[i - 1], r[i]);
            let (lo, hi) = (a + self.radius, b - self.radius);
            if t <= lo {
                a
            } else if t >= hi {
                b
            } else {
                a + (b - a) * (t - lo) / (hi - lo)
            }
        };
        value.clamp(-self.bound, self.bound)
    }

    /// Whether `eval(t)` is a root: inside a plateau or beyond the ends.
    pub fn lands_on_root(&self, t: f64) -> bool {
        let r = &self.roots;
        t <= r[0] + self.radius
            || t >= r[r.len() - 1] - self.radius
            || r.iter().any(|&x| (t - x).abs() <= self.radius)
    }

    fn nearest_root(&self, t: f64) -> f64 {
        self.roots
            .iter()
            .copied()
            .min_by(|a, b| (t - a).abs().total_cmp(&(t - b).abs()))
            .expect("at least one root")
    }
}

/// Outcome of [`norm_cap`].
#[derive(Clone, Debug)]
pub struct Capped {
    pub output: Mat,
    pub theta: f64,
    pub mu: f64,
}

/// Maps `θ·nil + skel` back through the blended metric,
/// `s_μ^{-1/2}(θ·nil + skel)s_μ^{1/2}`, choosing `θ` and `μ` so the result
/// obeys `‖·‖ ≤ C(1+captol)`.
///
/// `nil` is nilpotent on each spectral corner and `skel = Σ λᵢ·Qᵢ`, so every
/// `(θ, μ)` gives an exact solution. Preference order: `(1, 0)`; then the
/// largest `θ` at `μ = 0`; then the smallest `μ` admitting `θ = 0` and the
/// largest `θ` there. When `C` equals the largest root modulus only the
/// normal skeleton can meet the bound, so `μ = 1` is used directly.
pub fn norm_cap(nil: &Mat, skel: &Mat, sd: &SpectralData, bound: f64, captol: f64, max_root: f64) -> Result<Capped> {
    let target = bound * (1.0 + captol);
    let build = |theta: f64, mu: f64| -> Mat {
        let (root, inv_root) = sd.metric_roots(mu);
        &inv_root * (nil * c64(theta, 0.0) + skel) * &root
    };
    let fits = |m: &Mat| opnorm(m) <= target;
    let tight = bound <= max_root * (1.0 + captol);

    if !tight {
        let full = build(1.0, 0.0);
        if fits(&full) {
            return Ok(Capped {
                output: full,
                theta: 1.0,
                mu: 0.0,
            });
        }
    }
    let mu = if tight {
        1.0
    } else if fits(&build(0.0, 0.0)) {
        0.0
    } else {
        bisect(|mu| fits(&build(0.0, mu)), false)
    };
    let theta = if fits(&build(1.0, mu)) {
        1.0
    } else {
        bisect(|theta| fits(&build(theta, mu)), true)
    };
    let output = build(theta, mu);
    if !fits(&output) {
        return Err(Error::CapUnreachable {
            bound,
            skeleton_norm: opnorm(&build(0.0, mu)),
            cond_s: sd.cond_s,
        });
    }
    Ok(Capped { output, theta, mu })
}

/// 40-step bisection on `[0, 1]`. With `feasible_low` the predicate holds at 0
/// and the largest feasible point is returned; otherwise it holds at 1 and the
/// smallest feasible point is returned.
pub(crate) fn bisect<F: Fn(f64) -> bool>(ok: F, feasible_low: bool) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) == feasible_low {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if feasible_low {
        lo
    } else {
        hi
    }
}

fn check_bound(p: &Polynomial, bound: f64) -> Result<()> {
    if !(bound.is_finite() && bound > 0.0) {
        return Err(Error::InvalidArgument(format!("norm bound must be positive, got {bound}")));
    }
    for r in p.roots() {
        if r.value.norm() > bound {
            return Err(Error::RootOutsideBound { root: r.value, bound });
        }
    }
    Ok(())
}

fn spectral_for(x: &Mat, p: &Polynomial, opts: &LiftOptions) -> Result<SpectralData> {
    let stol = opts.stol.unwrap_or_else(|| default_stol(x.nrows()));
    let sd = if opts.force {
        spectral_data_forced(x, p, stol)
    } else {
        spectral_data(x, p, stol)
    };
    sd.map_err(Error::outside_basin)
}

pub fn stabilize(x: &Mat, p: &Polynomial, bound: f64, opts: &LiftOptions) -> Result<StabilizationReport> {
    match require_supported(p)? {
        Regime::AllMultiple => stabilize_multiple(x, p, bound, opts),
        _ => stabilize_simple_real(x, p, bound, opts),
    }
}

fn require_regime(p: &Polynomial, expected: Regime) -> Result<()> {
    require_supported(p)?;
    if p.regime() != expected {
        return Err(Error::RegimeMismatch {
            expected: expected.to_string(),
            found: p.regime().to_string(),
        });
    }
    Ok(())
}

struct Prelude {
    norm_before: f64,
    residual_before: f64,
}

fn prelude(x: &Mat, p: &Polynomial, bound: f64, opts: &LiftOptions) -> Result<Prelude> {
    validate(x)?;
    check_bound(p, bound)?;
    let norm_before = opnorm(x);
    if norm_before > bound * (1.0 + opts.pretol) {
        log::info!("input norm {norm_before:.6} exceeds bound {bound} beyond pretol");
    }
    let residual_before = opnorm(&poly::eval(p, x)?);
    Ok(Prelude {
        norm_before,
        residual_before,
    })
}

#[allow(clippy::too_many_arguments)]
fn finish(
    x: &Mat,
    p: &Polynomial,
    bound: f64,
    opts: &LiftOptions,
    pre: Prelude,
    sd: &SpectralData,
    capped: Capped,
    lift_shrink: f64,
) -> Result<StabilizationReport> {
    let output = capped.output;
    let norm_after = opnorm(&output);
    let residual_after = opnorm(&poly::eval(p, &output)?);
    let budget = exactness_budget(p, norm_after);
    if residual_after > budget || residual_after.is_nan() {
        return Err(Error::ExactnessLost {
            residual: residual_after,
            budget,
        });
    }
    log::debug!(
        "stabilized: residual {:.3e} -> {residual_after:.3e}, theta {}, mu {}",
        pre.residual_before,
        capped.theta,
        capped.mu
    );
    Ok(StabilizationReport {
        distance: opnorm(&(x - &output)),
        output,
        residual_before: pre.residual_before,
        residual_after,
        norm_before: pre.norm_before,
        norm_after,
        regime: p.regime(),
        cond_s: sd.cond_s,
        cap_factor: capped.theta,
        similarity_blend: capped.mu,
        lift_shrink,
        bound,
        forced: opts.force,
    })
}

/// All multiplicities at least 2.
pub fn stabilize_multiple(x: &Mat, p: &Polynomial, bound: f64, opts: &LiftOptions) -> Result<StabilizationReport> {
    require_regime(p, Regime::AllMultiple)?;
    let pre = prelude(x, p, bound, opts)?;
    let n = x.nrows();
    let sd = spectral_for(x, p, opts)?;
    let bases = orthonormal_resolution(&sd.projections).map_err(Error::outside_basin)?;
    let c = &sd.similarity_image;
    let c_norm = opnorm(c);
    let chain_opts = ChainOptions {
        tau: opts.tau,
        gap_ratio_max: opts.gap_ratio_max,
        enforce_gap: !opts.force,
    };

    let mut nil = Mat::zeros(n, n);
    let mut skel = Mat::zeros(n, n);
    for (root, basis) in p.roots().iter().zip(&bases) {
        let m = basis.ncols();
        if m == 0 {
            continue;
        }
        skel += basis * basis.adjoint() * root.value;
        let corner = basis.adjoint() * (c - identity(n) * root.value) * basis;
        // a corner at roundoff level is already zero; its chain would only see noise
        if opnorm(&corner) <= rtol(n) * c_norm.max(1.0) {
            continue;
        }
        let chain = build_chain(&corner, root.multiplicity as usize, &chain_opts).map_err(Error::outside_basin)?;
        let t = truncate_to_nilpotent(&corner, &chain)?;
        nil += basis * t * basis.adjoint();
    }
    let capped = norm_cap(&nil, &skel, &sd, bound, opts.captol, p.max_root_modulus())?;
    finish(x, p, bound, opts, pre, &sd, capped, 0.0)
}

/// All roots simple and real.
pub fn stabilize_simple_real(x: &Mat, p: &Polynomial, bound: f64, opts: &LiftOptions) -> Result<StabilizationReport> {
    require_regime(p, Regime::AllSimpleReal)?;
    let pre = prelude(x, p, bound, opts)?;
    if !opts.force {
        let threshold = spectral_gap_threshold(p, bound)?;
        if pre.residual_before > threshold {
            return Err(Error::GapTooWide {
                residual: pre.residual_before,
                threshold,
            });
        }
    }
    let n = x.nrows();
    let sd = spectral_for(x, p, opts)?;
    let clamp = ClampFunction::new(p, bound)?;
    let y = herm_eig_unchecked(&hermitian_part(&sd.similarity_image));

    for &t in &y.eigenvalues {
        if !opts.force && !clamp.lands_on_root(t) {
            let nearest = clamp.nearest_root(t);
            return Err(Error::OutsideBasin(Box::new(Error::ClusterAmbiguous {
                eigenvalue: c64(t, 0.0),
                nearest: c64(nearest, 0.0),
                second: None,
                distance: (t - nearest).abs(),
            })));
        }
    }

    // Shrink the lift toward its skeleton until s^{-1/2} Y s^{1/2} obeys the
    // bound. Eigenvalues only move toward their own root, so the clamp image
    // is unchanged; μ is reported.
    let target = bound * (1.0 + opts.captol);
    let (root, inv_root) = sd.metric_roots(0.0);
    let shrunk = |mu: f64| HermitianEig {
        eigenvalues: y
            .eigenvalues
            .iter()
            .map(|&t| (1.0 - mu) * t + mu * clamp.nearest_root(t))
            .collect(),
        eigenvectors: y.eigenvectors.clone(),
    };
    let within = |e: &HermitianEig| opnorm(&(&inv_root * e.reconstruct() * &root)) <= target;
    let mut lift_shrink = 0.0;
    let mut lift = shrunk(0.0);
    if !within(&lift) {
        let mut mu = 1e-3;
        loop {
            lift = shrunk(mu);
            if within(&lift) || mu >= 1.0 {
                break;
            }
            mu = (2.0 * mu).min(1.0);
        }
        lift_shrink = mu;
    }

    let skel = lift.map(|t| {
        let v = if clamp.lands_on_root(t) { clamp.eval(t) } else { clamp.nearest_root(t) };
        c64(v, 0.0)
    });
    let nil = Mat::zeros(n, n);
    let capped = norm_cap(&nil, &skel, &sd, bound, opts.captol, p.max_root_modulus())?;
    finish(x, p, bound, opts, pre, &sd, capped, lift_shrink)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mat::{from_real_diagonal, from_real_rows, herm_eig};

    fn poly(roots: &[(f64, u32)]) -> Polynomial {
        Polynomial::from_real(roots).unwrap()
    }

    fn run(x: &Mat, roots: &[(f64, u32)], bound: f64) -> StabilizationReport {
        stabilize(x, &poly(roots), bound, &LiftOptions::default()).unwrap()
    }

    #[test]
    fn nilpotent_square_example() {
        let d = 1e-3;
        let x = from_real_rows(&[&[d, 1.0], &[0.0, -d]]);
        let rep = run(&x, &[(0.0, 2)], 1.1);
        assert!(rep.residual_after <= 1e-10);
        assert!(rep.norm_after <= 1.1 * (1.0 + 1e-9));
        // at least as close as the naive answer [[0,1],[0,0]]
        assert!(rep.distance <= d * 2f64.sqrt() + 1e-12, "distance {}", rep.distance);
    }

    #[test]
    fn exact_projection_is_fixed() {
        let x = from_real_diagonal(&[1.0, 0.0, 1.0]);
        let rep = run(&x, &[(0.0, 1), (1.0, 1)], 1.0);
        assert!(rep.distance < 1e-14);
    }

    #[test]
    fn symmetry_example_clamps_eigenvalues() {
        let x = from_real_diagonal(&[0.9, -1.1]);
        let opts = LiftOptions::default();
        let rep = stabilize(&x, &poly(&[(1.0, 1), (-1.0, 1)]), 1.0, &opts).unwrap();
        assert!(opnorm(&(rep.output - from_real_diagonal(&[1.0, -1.0]))) < 1e-14);
        assert!((rep.norm_after - 1.0).abs() < 1e-14);
    }

    #[test]
    fn simple_real_examples() {
        let small = from_real_rows(&[&[0.01, 0.02], &[0.0, -0.01]]);
        let rep = run(&small, &[(0.0, 1)], 1.0);
        assert_eq!(opnorm(&rep.output), 0.0);

        let x = from_real_rows(&[&[0.95, 0.01], &[0.01, -0.97]]);
        let rep = run(&x, &[(1.0, 1), (-1.0, 1)], 1.0);
        let eig = herm_eig(&rep.output).unwrap();
        assert!((eig.eigenvalues[0] + 1.0).abs() < 1e-12 && (eig.eigenvalues[1] - 1.0).abs() < 1e-12);
        assert!(rep.distance <= 0.06);

        let x = from_real_rows(&[&[0.0, 1.0], &[0.0, 2.0]]);
        let rep = run(&x, &[(0.0, 1), (2.0, 1)], 2.5);
        assert!(rep.residual_after <= exactness_budget(&poly(&[(0.0, 1), (2.0, 1)]), rep.norm_after));
        assert!(rep.distance <= 0.6 + 1e-12, "distance {}", rep.distance);
        assert!(rep.norm_after <= 2.5 * (1.0 + 1e-9));
    }

    #[test]
    fn scalar_multiple_root_is_fixed() {
        let x = identity(3).scale(0.4);
        let rep = run(&x, &[(0.4, 2)], 1.0);
        assert!(rep.distance < 1e-14);
    }

    #[test]
    fn norm_cap_examples() {
        let p = poly(&[(0.0, 2)]);
        let x = from_real_rows(&[&[0.0, 1.2], &[0.0, 0.0]]);
        let sd = spectral_data(&x, &p, 1e-8).unwrap();
        let capped = norm_cap(&x, &Mat::zeros(2, 2), &sd, 1.0, 1e-9, 0.0).unwrap();
        assert!((capped.theta - 1.0 / 1.2).abs() < 1e-9);
        assert!(opnorm(&(capped.output - from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]))) < 1e-9);

        let capped = norm_cap(&x, &Mat::zeros(2, 2), &sd, 2.0, 1e-9, 0.0).unwrap();
        assert_eq!(capped.theta, 1.0);
    }

    #[test]
    fn norm_cap_lands_just_under_bound() {
        // nilpotent legs on both corners of t²(t−1)² with a normal skeleton of norm 0.9
        let p = poly(&[(0.0, 2), (0.9, 2)]);
        let mut x = from_real_diagonal(&[0.0, 0.0, 0.9, 0.9]);
        x[(0, 1)] = c64(1.05, 0.0);
        x[(2, 3)] = c64(0.3, 0.0);
        let sd = spectral_data(&x, &p, 1e-8).unwrap();
        let skel = from_real_diagonal(&[0.0, 0.0, 0.9, 0.9]);
        let nil = &x - &skel;
        let capped = norm_cap(&nil, &skel, &sd, 1.0, 1e-9, 0.9).unwrap();
        let norm = opnorm(&capped.output);
        assert!(capped.theta < 1.0);
        assert!((1.0 - 1e-9..=1.0 + 1e-9).contains(&norm), "norm {norm}");
    }

    #[test]
    fn clamp_function_shape() {
        let f = ClampFunction::new(&poly(&[(-1.0, 1), (0.0, 1), (1.0, 1)]), 1.0).unwrap();
        assert_eq!(f.eval(-3.0), -1.0);
        assert_eq!(f.eval(0.3), 0.0);
        assert_eq!(f.eval(0.7), 1.0);
        assert!((f.eval(0.5) - 0.5).abs() < 1e-15);
        assert!(!f.lands_on_root(0.5));
        assert!(f.lands_on_root(5.0));
        for i in 0..=200 {
            let t = -1.0 + i as f64 * 0.01;
            assert!(f.eval(t).abs() <= 1.0);
        }
    }

    #[test]
    fn refusals() {
        let mixed = poly(&[(0.0, 2), (1.0, 1)]);
        assert!(matches!(
            stabilize(&identity(2), &mixed, 1.0, &LiftOptions::default()),
            Err(Error::UnsupportedRegime(_))
        ));
        assert!(matches!(
            stabilize(&identity(2), &poly(&[(2.0, 2)]), 1.0, &LiftOptions::default()),
            Err(Error::RootOutsideBound { .. })
        ));
        let far = from_real_diagonal(&[0.5, -0.5]);
        let err = stabilize(&far, &poly(&[(1.0, 1), (-1.0, 1)]), 1.0, &LiftOptions::default()).unwrap_err();
        assert!(err.is_refusal(), "{err}");
        let forced = LiftOptions {
            force: true,
            ..LiftOptions::default()
        };
        let rep = stabilize(&far, &poly(&[(1.0, 1), (-1.0, 1)]), 1.0, &forced).unwrap();
        assert!(rep.residual_after < 1e-12 && rep.forced);
    }
}
