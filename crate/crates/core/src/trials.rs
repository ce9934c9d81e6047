//! Randomized trial generation and the stability-curve sweep shared by the
//! command-line driver and the acceptance suite.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lifter::{stabilize, LiftOptions};
use crate::mat::{c64, Mat};
use crate::normest::{sample_representation, SampleOptions};
use crate::poly::Polynomial;
use crate::random::{derive_seed, rng, unit_noise};

/// An exact solution and its perturbation by `eta` times a unit-norm
/// complex Gaussian matrix.
#[derive(Clone, Debug)]
pub struct Trial {
    pub exact: Mat,
    pub input: Mat,
    pub eta: f64,
    pub seed: u64,
}

pub fn perturbed_solution(p: &Polynomial, dim: usize, eta: f64, bound: f64, seed: u64) -> Result<Trial> {
    let opts = SampleOptions {
        norm_bound: bound,
        ..SampleOptions::default()
    };
    let exact = sample_representation(p, dim, derive_seed(seed, &[0]), &opts)?.x;
    let noise = unit_noise(dim, &mut rng(derive_seed(seed, &[1])));
    let input = &exact + noise * c64(eta, 0.0);
    Ok(Trial {
        exact,
        input,
        eta,
        seed,
    })
}

/// `points` values from `lo` to `hi`, evenly spaced in `log10`.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && lo.is_finite() && hi.is_finite()) {
        return Err(Error::InvalidArgument(format!("bad range {lo}..{hi}")));
    }
    if points == 0 {
        return Err(Error::InvalidArgument("grid needs at least one point".into()));
    }
    if points == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.log10(), hi.log10());
    Ok((0..points)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (points - 1) as f64))
        .collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct CurveConfig {
    pub dim: usize,
    pub etas: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub bound: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CurveRow {
    pub eta: f64,
    pub trial: usize,
    pub seed: u64,
    /// `ok`, or the refusal message.
    pub status: String,
    pub residual_before: f64,
    pub distance: f64,
    pub residual_after: f64,
    pub norm_after: f64,
}

/// Stabilizes `trials` perturbed solutions per noise level. Trial `t` at grid
/// index `i` uses seed `derive_seed(seed, [i, t])`; rows are ordered by
/// `(i, t)`. Refusals become rows with `NaN` measurements; other errors abort.
pub fn stability_curve(p: &Polynomial, cfg: &CurveConfig, opts: &LiftOptions) -> Result<Vec<CurveRow>> {
    let jobs: Vec<(usize, usize)> = (0..cfg.etas.len())
        .flat_map(|i| (0..cfg.trials).map(move |t| (i, t)))
        .collect();
    jobs.par_iter()
        .map(|&(i, t)| {
            let eta = cfg.etas[i];
            let seed = derive_seed(cfg.seed, &[i as u64, t as u64]);
            let trial = perturbed_solution(p, cfg.dim, eta, cfg.bound, seed)?;
            let row = |status: String, rb: f64, d: f64, ra: f64, na: f64| CurveRow {
                eta,
                trial: t,
                seed,
                status,
                residual_before: rb,
                distance: d,
                residual_after: ra,
                norm_after: na,
            };
            match stabilize(&trial.input, p, cfg.bound, opts) {
                Ok(rep) => Ok(row(
                    "ok".into(),
                    rep.residual_before,
                    rep.distance,
                    rep.residual_after,
                    rep.norm_after,
                )),
                Err(e) if e.is_refusal() => Ok(row(e.to_string(), f64::NAN, f64::NAN, f64::NAN, f64::NAN)),
                Err(e) => Err(e),
            }
        })
        .collect()
}

/// Median of the finite values, `None` if there are none.
pub fn median(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mat::opnorm;

    #[test]
    fn grid_endpoints() {
        let g = log_grid(1e-6, 1e-1, 6).unwrap();
        assert_eq!(g.len(), 6);
        assert!((g[0] - 1e-6).abs() < 1e-18 && (g[5] - 1e-1).abs() < 1e-15);
        assert!((g[2] - 1e-4).abs() < 1e-16);
        assert!(log_grid(0.0, 1.0, 3).is_err());
    }

    #[test]
    fn perturbation_has_requested_size() {
        let p = Polynomial::from_real(&[(0.0, 2)]).unwrap();
        let t = perturbed_solution(&p, 6, 1e-3, 1.0, 9).unwrap();
        assert!((opnorm(&(&t.input - &t.exact)) - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn curve_is_ordered_and_reproducible() {
        let p = Polynomial::from_real(&[(0.0, 2)]).unwrap();
        let cfg = CurveConfig {
            dim: 4,
            etas: vec![1e-6, 1e-3],
            trials: 5,
            seed: 3,
            bound: 1.25,
        };
        let a = stability_curve(&p, &cfg, &LiftOptions::default()).unwrap();
        let b = stability_curve(&p, &cfg, &LiftOptions::default()).unwrap();
        assert_eq!(a.len(), 10);
        assert_eq!(a[7].trial, 2);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.distance.to_bits(), y.distance.to_bits());
        }
    }

    #[test]
    fn median_ignores_nan() {
        assert_eq!(median([3.0, f64::NAN, 1.0, 2.0]), Some(2.0));
        assert_eq!(median([f64::NAN]), None);
        assert_eq!(median([1.0, 2.0]), Some(1.5));
    }
}
