//! Finite prefixes of matrix sequences as a desk model of `Π M_{n_k} / ⊕ M_{n_k}`.
//!
//! A sequence whose term norms vanish plays the role of a compact operator;
//! the limsup of term norms, estimated on a trailing window, plays the role
//! of the essential norm.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lifter::{exactness_budget, stabilize, LiftOptions};
use crate::mat::io::serde_mats;
use crate::mat::{ensure_same_dim, hermitian_defect, hstack, identity, opnorm, projection_from_basis, validate, Mat, HTOL};
use crate::poly::{self, require_supported, spectral_gap_threshold, Polynomial, Regime};
use crate::spectral::orthonormal_resolution;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TailModel {
    Truncated,
    /// The sequence repeats with this period beyond the prefix.
    Periodic(usize),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MatSeq {
    #[serde(with = "serde_mats")]
    pub terms: Vec<Mat>,
    #[serde(default = "truncated")]
    pub tail_model: TailModel,
}

fn truncated() -> TailModel {
    TailModel::Truncated
}

impl MatSeq {
    pub fn new(terms: Vec<Mat>, tail_model: TailModel) -> Result<Self> {
        let seq = MatSeq { terms, tail_model };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<()> {
        if self.terms.is_empty() {
            return Err(Error::InvalidSequence("no terms".into()));
        }
        for t in &self.terms {
            validate(t)?;
        }
        if let TailModel::Periodic(period) = self.tail_model {
            if period == 0 || period > self.terms.len() {
                return Err(Error::InvalidSequence(format!(
                    "period {period} must lie in 1..={}",
                    self.terms.len()
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let seq: MatSeq = serde_json::from_str(s)?;
        seq.validate()?;
        Ok(seq)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("sequence serialization")
    }

    /// Window used for limit quantities: the period for periodic tails,
    /// otherwise `override` or `⌈L/3⌉`.
    pub fn window(&self, window: Option<usize>) -> Result<usize> {
        let l = self.len();
        if l < 3 {
            return Err(Error::InvalidSequence(format!("limit estimates need at least 3 terms, got {l}")));
        }
        let w = match (self.tail_model, window) {
            (TailModel::Periodic(p), _) => p,
            (_, Some(w)) => w,
            _ => l.div_ceil(3),
        };
        if w == 0 || w > l {
            return Err(Error::InvalidSequence(format!("window {w} must lie in 1..={l}")));
        }
        Ok(w)
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct EssentialNormEstimate {
    pub value: f64,
    pub window: usize,
}

/// Largest term norm over the trailing window.
pub fn essential_norm(s: &MatSeq, window: Option<usize>) -> Result<EssentialNormEstimate> {
    let w = s.window(window)?;
    let value = s.terms[s.len() - w..].iter().map(opnorm).fold(0.0, f64::max);
    Ok(EssentialNormEstimate { value, window: w })
}

#[derive(Clone, Debug, Serialize)]
pub struct CalkinOptions {
    pub lift: LiftOptions,
    pub window: Option<usize>,
    pub seqtol: f64,
    /// Largest trailing residual `‖p(S_k)‖` accepted; `None` derives it from
    /// the regime.
    pub basin_threshold: Option<f64>,
}

impl Default for CalkinOptions {
    fn default() -> Self {
        CalkinOptions {
            lift: LiftOptions::default(),
            window: None,
            seqtol: 1e-6,
            basin_threshold: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TermRow {
    /// 1-based term index.
    pub k: usize,
    pub residual_before: f64,
    pub compact_norm: f64,
    pub corrected_norm: f64,
    pub residual_after: f64,
    pub bound: f64,
    pub cap_factor: f64,
    pub forced: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CalkinReport {
    pub essential_norm: f64,
    pub window: usize,
    pub basin_threshold: f64,
    pub rows: Vec<TermRow>,
    /// (a) every corrected term is exact.
    pub all_exact: bool,
    /// (b) compactness proxy over the trailing window.
    pub trailing_max_compact: f64,
    pub holder_reference: f64,
    pub holder_ratio: f64,
    /// (c) `max_W ‖S′_k‖ − ‖S‖ₑ`, required to be at most `seqtol`.
    pub norm_excess: f64,
    pub norm_gap: f64,
    /// Spread of `‖S_k‖` over the window, a proxy for the truncation error
    /// of the limsup estimate.
    pub window_spread: f64,
    pub norm_certified: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CalkinResult {
    pub corrected: MatSeq,
    pub compact: MatSeq,
    pub report: CalkinReport,
}

/// Term-wise stabilization with the common bound `C = max(‖S‖ₑ, max|λᵢ|)`,
/// giving `S′ = S + K` with `K` vanishing along the tail.
///
/// Terms before the window that fall outside the basin are stabilized in
/// forced mode; a refusal inside the window is an error.
pub fn compact_correct(s: &MatSeq, p: &Polynomial, opts: &CalkinOptions) -> Result<CalkinResult> {
    let regime = require_supported(p)?;
    let ess = essential_norm(s, opts.window)?;
    let l = s.len();
    let start = l - ess.window;
    let bound = ess.value.max(p.max_root_modulus());
    if bound == 0.0 {
        return Err(Error::InvalidSequence("sequence and roots are all zero".into()));
    }

    let residuals: Vec<f64> = s
        .terms
        .par_iter()
        .map(|t| poly::eval(p, t).map(|m| opnorm(&m)))
        .collect::<Result<_>>()?;
    let basin_threshold = match opts.basin_threshold {
        Some(t) => t,
        None if regime == Regime::AllSimpleReal => spectral_gap_threshold(p, bound)?,
        None => 0.1 * bound.max(1.0).powi(p.degree() as i32),
    };
    let trailing_residual = residuals[start..].iter().copied().fold(0.0, f64::max);
    if trailing_residual > basin_threshold {
        return Err(Error::OutsideBasin(Box::new(Error::GapTooWide {
            residual: trailing_residual,
            threshold: basin_threshold,
        })));
    }

    let outcomes: Vec<Result<_>> = s
        .terms
        .par_iter()
        .enumerate()
        .map(|(i, term)| match stabilize(term, p, bound, &opts.lift) {
            Err(e) if e.is_refusal() && i < start && !opts.lift.force => {
                log::info!("term {}: {e}; retrying in forced mode", i + 1);
                let forced = LiftOptions {
                    force: true,
                    ..opts.lift.clone()
                };
                stabilize(term, p, bound, &forced)
            }
            other => other,
        })
        .collect();

    let mut corrected = Vec::with_capacity(l);
    let mut compact = Vec::with_capacity(l);
    let mut rows = Vec::with_capacity(l);
    for (i, outcome) in outcomes.into_iter().enumerate() {
        let rep = outcome.map_err(|e| match e {
            e if e.is_refusal() => Error::OutsideBasin(Box::new(Error::InvalidSequence(format!(
                "term {} in the trailing window: {e}",
                i + 1
            )))),
            e => e,
        })?;
        let k = &rep.output - &s.terms[i];
        rows.push(TermRow {
            k: i + 1,
            residual_before: residuals[i],
            compact_norm: opnorm(&k),
            corrected_norm: rep.norm_after,
            residual_after: rep.residual_after,
            bound,
            cap_factor: rep.cap_factor,
            forced: rep.forced,
        });
        corrected.push(rep.output);
        compact.push(k);
    }

    let trailing = &rows[start..];
    let all_exact = rows
        .iter()
        .all(|r| r.residual_after <= exactness_budget(p, r.corrected_norm));
    let trailing_max_compact = trailing.iter().map(|r| r.compact_norm).fold(0.0, f64::max);
    let holder_reference = 3.0 * trailing_residual.powf(1.0 / p.degree() as f64);
    let holder_ratio = if holder_reference > 0.0 {
        trailing_max_compact / holder_reference
    } else if trailing_max_compact == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    let max_corrected = trailing.iter().map(|r| r.corrected_norm).fold(0.0, f64::max);
    let norms: Vec<f64> = s.terms[start..].iter().map(opnorm).collect();
    let window_spread = norms.iter().copied().fold(0.0, f64::max) - norms.iter().copied().fold(f64::INFINITY, f64::min);
    let norm_excess = max_corrected - ess.value;

    let report = CalkinReport {
        essential_norm: ess.value,
        window: ess.window,
        basin_threshold,
        all_exact,
        trailing_max_compact,
        holder_reference,
        holder_ratio,
        norm_excess,
        norm_gap: norm_excess.abs(),
        window_spread,
        norm_certified: norm_excess <= opts.seqtol,
        rows,
    };
    Ok(CalkinResult {
        corrected: MatSeq {
            terms: corrected,
            tail_model: s.tail_model,
        },
        compact: MatSeq {
            terms: compact,
            tail_model: s.tail_model,
        },
        report,
    })
}

/// Exact resolution of identity near `F₁, …, F_m`.
pub fn lift_projection_family(family: &[Mat], tol: f64) -> Result<Vec<Mat>> {
    let Some(first) = family.first() else {
        return Err(Error::InvalidArgument("empty projection family".into()));
    };
    let n = validate(first)?;
    let mut sum = Mat::zeros(n, n);
    for (i, f) in family.iter().enumerate() {
        validate(f)?;
        ensure_same_dim(f, n)?;
        let defect = hermitian_defect(f);
        if defect > HTOL {
            return Err(Error::NotHermitian { defect });
        }
        let idem = opnorm(&(f * f - f));
        if idem > tol {
            return Err(Error::InvalidArgument(format!(
                "member {} is {idem:.3e} from idempotent, above {tol:.3e}",
                i + 1
            )));
        }
        sum += f;
    }
    let defect = opnorm(&(sum - identity(n)));
    if defect > tol {
        return Err(Error::InvalidArgument(format!(
            "family sums to identity only within {defect:.3e}, above {tol:.3e}"
        )));
    }
    Ok(orthonormal_resolution(family)?
        .iter()
        .map(projection_from_basis)
        .collect())
}

/// Leading `k × k` corners `R_k X R_k` for each cutoff rank.
pub fn rfd_compress(x: &Mat, ranks: &[usize]) -> Result<MatSeq> {
    let n = validate(x)?;
    let mut previous = 0;
    for &k in ranks {
        if k == 0 || k > n || k <= previous {
            return Err(Error::InvalidArgument(format!(
                "ranks must increase strictly within 1..={n}, got {ranks:?}"
            )));
        }
        previous = k;
    }
    let terms = ranks.iter().map(|&k| x.view((0, 0), (k, k)).into_owned()).collect();
    MatSeq::new(terms, TailModel::Truncated)
}

/// Unitary whose columns run through orthonormal bases of the ranges of a
/// resolution of identity in round-robin order. In this basis every leading
/// corner of every member is again a projection, and the corners of all
/// members sum to the identity.
pub fn interleaved_basis(projections: &[Mat]) -> Result<Mat> {
    let bases = orthonormal_resolution(projections)?;
    let n = bases[0].nrows();
    let mut columns = Vec::with_capacity(n);
    let longest = bases.iter().map(|b| b.ncols()).max().unwrap_or(0);
    for j in 0..longest {
        for b in &bases {
            if j < b.ncols() {
                columns.push(b.column(j).into_owned());
            }
        }
    }
    let blocks: Vec<Mat> = columns.into_iter().map(|c| Mat::from_column_slice(n, 1, c.as_slice())).collect();
    Ok(hstack(&blocks, n))
}
