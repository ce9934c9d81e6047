//! Lower bounds for universal norms `‖q(x, x*)‖` subject to `p(x) = 0`,
//! `‖x‖ ≤ 1`, by maximizing over random exact matrix solutions.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lifter::{bisect, exactness_budget};
use crate::mat::io::serde_mat;
use crate::mat::{c64, herm_eig_unchecked, identity, opnorm, HermitianEig, Mat, C64};
use crate::poly::{self, require_supported, Polynomial};
use crate::random::{derive_seed, haar_unitary, index, random_isometry, random_positive, rng, uniform, Rng64};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Letter {
    X,
    XStar,
}

/// Product of letters, left to right; the empty word is the identity.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct NcWord(pub Vec<Letter>);

#[derive(Clone, Debug, PartialEq)]
pub struct NcPoly {
    pub terms: Vec<(C64, NcWord)>,
}

impl NcWord {
    pub fn eval(&self, x: &Mat, x_star: &Mat) -> Mat {
        let mut acc = identity(x.nrows());
        for letter in &self.0 {
            acc = match letter {
                Letter::X => &acc * x,
                Letter::XStar => &acc * x_star,
            };
        }
        acc
    }
}

impl NcPoly {
    pub fn eval(&self, x: &Mat) -> Mat {
        let x_star = x.adjoint();
        let n = x.nrows();
        self.terms
            .iter()
            .fold(Mat::zeros(n, n), |acc, (c, w)| acc + w.eval(x, &x_star) * *c)
    }

    /// `Σ |c| · bound^{|w|}`, the triangle-inequality bound over `‖x‖ ≤ bound`.
    pub fn coefficient_bound(&self, bound: f64) -> f64 {
        self.terms.iter().map(|(c, w)| c.norm() * bound.powi(w.0.len() as i32)).sum()
    }
}

impl fmt::Display for NcPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (c, w)) in self.terms.iter().enumerate() {
            let mut c = *c;
            if i > 0 {
                if c.im == 0.0 && c.re.is_sign_negative() {
                    f.write_str(" - ")?;
                    c = -c;
                } else {
                    f.write_str(" + ")?;
                }
            }
            let unit = c == c64(1.0, 0.0);
            if !unit || w.0.is_empty() {
                if c.im == 0.0 {
                    write!(f, "{}", c.re)?;
                } else {
                    write!(f, "({}{:+}i)", c.re, c.im)?;
                }
            }
            for l in &w.0 {
                f.write_str(match l {
                    Letter::X => "x",
                    Letter::XStar => "x*",
                })?;
            }
        }
        Ok(())
    }
}

/// Parses sums of terms such as `x + x*`, `x*x`, `2x - 0.5i x*`, `(1+2i)xx*`
/// or `1`. A `*` directly after `x` marks the adjoint.
impl FromStr for NcPoly {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let chars: Vec<char> = s.chars().filter(|c| !c.is_whitespace()).collect();
        let bad = |msg: &str| Error::InvalidArgument(format!("cannot parse polynomial `{s}`: {msg}"));
        if chars.is_empty() {
            return Err(bad("empty"));
        }
        let mut pos = 0;
        let mut terms = Vec::new();
        while pos < chars.len() {
            let mut sign = 1.0;
            if !terms.is_empty() || matches!(chars[pos], '+' | '-') {
                match chars.get(pos) {
                    Some('+') => pos += 1,
                    Some('-') => {
                        sign = -1.0;
                        pos += 1
                    }
                    _ => return Err(bad("expected `+` or `-` between terms")),
                }
            }
            let (coef, explicit) = parse_coefficient(&chars, &mut pos).map_err(|m| bad(&m))?;
            let mut word = Vec::new();
            while chars.get(pos) == Some(&'x') {
                pos += 1;
                if chars.get(pos) == Some(&'*') {
                    word.push(Letter::XStar);
                    pos += 1;
                } else {
                    word.push(Letter::X);
                }
            }
            if !explicit && word.is_empty() {
                return Err(bad("empty term"));
            }
            terms.push((coef * sign, NcWord(word)));
        }
        Ok(NcPoly { terms })
    }
}

fn parse_number(chars: &[char], pos: &mut usize) -> Option<f64> {
    let start = *pos;
    while *pos < chars.len() && (chars[*pos].is_ascii_digit() || chars[*pos] == '.' || chars[*pos] == 'e') {
        // allow an exponent sign right after `e`
        if chars[*pos] == 'e' && matches!(chars.get(*pos + 1), Some('+' | '-')) {
            *pos += 1;
        }
        *pos += 1;
    }
    if *pos == start {
        return None;
    }
    chars[start..*pos].iter().collect::<String>().parse().ok()
}

/// Returns the coefficient and whether one was written.
fn parse_coefficient(chars: &[char], pos: &mut usize) -> std::result::Result<(C64, bool), String> {
    match chars.get(*pos) {
        Some('(') => {
            *pos += 1;
            let mut value = C64::default();
            let mut sign = 1.0;
            loop {
                match chars.get(*pos) {
                    Some(')') => {
                        *pos += 1;
                        return Ok((value, true));
                    }
                    Some('+') => *pos += 1,
                    Some('-') => {
                        sign = -1.0;
                        *pos += 1
                    }
                    None => return Err("unclosed `(`".into()),
                    _ => {}
                }
                let magnitude = parse_number(chars, pos);
                let imaginary = chars.get(*pos) == Some(&'i');
                if imaginary {
                    *pos += 1;
                }
                let m = match (magnitude, imaginary) {
                    (Some(m), _) => m,
                    (None, true) => 1.0,
                    (None, false) => return Err(format!("unexpected character at {}", *pos)),
                };
                value += if imaginary { c64(0.0, sign * m) } else { c64(sign * m, 0.0) };
                sign = 1.0;
            }
        }
        _ => {
            let magnitude = parse_number(chars, pos);
            let imaginary = chars.get(*pos) == Some(&'i');
            if imaginary {
                *pos += 1;
            }
            Ok(match (magnitude, imaginary) {
                (Some(m), false) => (c64(m, 0.0), true),
                (Some(m), true) => (c64(0.0, m), true),
                (None, true) => (c64(0.0, 1.0), true),
                (None, false) => (c64(1.0, 0.0), false),
            })
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SampleOptions {
    pub norm_bound: f64,
    pub max_similarity_cond: f64,
}

impl Default for SampleOptions {
    fn default() -> Self {
        SampleOptions {
            norm_bound: 1.0,
            max_similarity_cond: 10.0,
        }
    }
}

/// An exact solution of `p(X) = 0` with `‖X‖ ≤ norm_bound`.
#[derive(Clone, Debug, Serialize)]
pub struct RepSample {
    #[serde(with = "serde_mat")]
    pub x: Mat,
    pub dim: usize,
    pub seed: u64,
    pub residual: f64,
    pub norm: f64,
}

/// Random non-increasing composition of `m` into `parts` positive sizes.
fn level_sizes(m: usize, parts: usize, rng: &mut Rng64) -> Vec<usize> {
    let mut sizes = vec![1; parts];
    for _ in parts..m {
        let i = index(rng, parts);
        sizes[i] += 1;
    }
    sizes.sort_by(|a, b| b.cmp(a));
    sizes
}

/// Staircase nilpotent of order exactly `sizes.len()`: only the blocks mapping
/// level `a + 1` into level `a` are nonzero, each injective with singular
/// values in `[0.5, 1]`.
fn staircase(sizes: &[usize], rng: &mut Rng64) -> Mat {
    let m: usize = sizes.iter().sum();
    let mut out = Mat::zeros(m, m);
    let mut row = 0;
    for a in 0..sizes.len().saturating_sub(1) {
        let (rows, cols) = (sizes[a], sizes[a + 1]);
        let left = random_isometry(rows, cols, rng);
        let right = haar_unitary(cols, rng);
        let sigma = Mat::from_fn(cols, cols, |i, j| {
            if i == j {
                c64(uniform(rng, 0.5, 1.0), 0.0)
            } else {
                C64::default()
            }
        });
        let block = left * sigma * right.adjoint();
        out.view_mut((row, row + rows), (rows, cols)).copy_from(&block);
        row += rows;
    }
    out
}

pub fn sample_representation(p: &Polynomial, dim: usize, seed: u64, opts: &SampleOptions) -> Result<RepSample> {
    require_supported(p)?;
    let bound = opts.norm_bound;
    if !(bound.is_finite() && bound > 0.0) {
        return Err(Error::InvalidArgument(format!("norm bound must be positive, got {bound}")));
    }
    if dim == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    for r in p.roots() {
        if r.value.norm() > bound {
            return Err(Error::RootOutsideBound { root: r.value, bound });
        }
    }
    let mut rng = rng(seed);
    let roots = p.roots();
    let mut counts = vec![0usize; roots.len()];
    for _ in 0..dim {
        counts[index(&mut rng, roots.len())] += 1;
    }

    let mut nil = Mat::zeros(dim, dim);
    let mut skel = Mat::zeros(dim, dim);
    let mut offset = 0;
    for (root, &m) in roots.iter().zip(&counts) {
        if m == 0 {
            continue;
        }
        for i in offset..offset + m {
            skel[(i, i)] = root.value;
        }
        let max_order = (root.multiplicity as usize).min(m);
        if max_order >= 2 {
            // order at least 2 so the corner is never trivially zero
            let order = 2 + index(&mut rng, max_order - 1);
            let sizes = level_sizes(m, order, &mut rng);
            let scale = bound * uniform(&mut rng, 0.5, 2.0);
            let block = staircase(&sizes, &mut rng) * c64(scale, 0.0);
            nil.view_mut((offset, offset), (m, m)).copy_from(&block);
        }
        offset += m;
    }
    let u = haar_unitary(dim, &mut rng);
    let nil = &u * nil * u.adjoint();
    let skel = &u * skel * u.adjoint();
    let cond = (uniform(&mut rng, 0.0, 1.0) * opts.max_similarity_cond.max(1.0).ln()).exp();
    let metric = herm_eig_unchecked(&random_positive(dim, cond, &mut rng));

    let budget = |x: &Mat| exactness_budget(p, bound.max(opnorm(x)));
    let attempt = |metric: &HermitianEig| -> Option<RepSample> {
        let x = contract(&nil, &skel, metric, bound, p.max_root_modulus());
        let residual = opnorm(&poly::eval(p, &x).ok()?);
        let norm = opnorm(&x);
        (residual <= budget(&x) && norm <= bound * (1.0 + 1e-12)).then_some(RepSample {
            x,
            dim,
            seed,
            residual,
            norm,
        })
    };
    attempt(&metric)
        .or_else(|| {
            log::debug!("sample {seed}: similarity lost exactness, retrying without it");
            attempt(&herm_eig_unchecked(&identity(dim)))
        })
        .ok_or_else(|| Error::Invariant(format!("sample {seed} at dim {dim} failed verification")))
}

/// `S_μ^{-1/2}(θ·nil + skel)S_μ^{1/2}` with `S_μ = (1−μ)S + μI`, taking the
/// smallest `μ` for which the skeleton fits with room to spare and then the
/// largest `θ`.
fn contract(nil: &Mat, skel: &Mat, metric: &HermitianEig, bound: f64, max_root: f64) -> Mat {
    let build = |theta: f64, mu: f64| -> Mat {
        let blend = |t: f64| (1.0 - mu) * t + mu;
        let root = metric.map(|t| c64(blend(t).sqrt(), 0.0));
        let inv_root = metric.map(|t| c64(blend(t).sqrt().recip(), 0.0));
        &inv_root * (nil * c64(theta, 0.0) + skel) * &root
    };
    let fits = |m: &Mat| opnorm(m) <= bound;
    // the skeleton may use half the headroom above max|λ|, leaving the rest
    // to the nilpotent part
    let skel_fits = |m: &Mat| opnorm(m) <= 0.5 * (bound + max_root);
    let mu = if max_root >= bound * (1.0 - 1e-12) {
        1.0
    } else if skel_fits(&build(0.0, 0.0)) {
        0.0
    } else {
        bisect(|mu| skel_fits(&build(0.0, mu)), false)
    };
    let full = build(1.0, mu);
    if fits(&full) {
        return full;
    }
    let theta = bisect(|theta| fits(&build(theta, mu)), true);
    build(theta, mu)
}

#[derive(Clone, Debug, Serialize)]
pub struct DimEstimate {
    pub dim: usize,
    pub trials: usize,
    pub best: f64,
    pub argmax_seed: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct NormEstimate {
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub table: Vec<DimEstimate>,
}

/// Maximum of `‖q(X, X*)‖` over `trials` samples per dimension. Trial `t` at
/// dimension `d` uses seed `derive_seed(seed, [d, t])`, so results do not
/// depend on scheduling.
pub fn estimate_norm(
    q: &NcPoly,
    p: &Polynomial,
    dims: &[usize],
    trials: usize,
    seed: u64,
    opts: &SampleOptions,
) -> Result<NormEstimate> {
    require_supported(p)?;
    let upper_bound = q.coefficient_bound(opts.norm_bound);
    let mut table = Vec::with_capacity(dims.len());
    for &dim in dims {
        let values: Vec<(f64, u64)> = (0..trials as u64)
            .into_par_iter()
            .map(|t| {
                let s = derive_seed(seed, &[dim as u64, t]);
                let sample = sample_representation(p, dim, s, opts)?;
                Ok((opnorm(&q.eval(&sample.x)), s))
            })
            .collect::<Result<_>>()?;
        let (best, argmax_seed) = values
            .iter()
            .copied()
            .fold((f64::NEG_INFINITY, 0), |acc, v| if v.0 > acc.0 { v } else { acc });
        table.push(DimEstimate {
            dim,
            trials,
            best,
            argmax_seed,
        });
    }
    let lower_bound = table.iter().map(|r| r.best).fold(0.0, f64::max);
    if lower_bound > upper_bound * (1.0 + 1e-9) {
        return Err(Error::Invariant(format!(
            "estimate {lower_bound} exceeds the coefficient bound {upper_bound}"
        )));
    }
    Ok(NormEstimate {
        lower_bound,
        upper_bound,
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly(roots: &[(f64, u32)]) -> Polynomial {
        Polynomial::from_real(roots).unwrap()
    }

    #[test]
    fn parses_words() {
        let q: NcPoly = "x + x*".parse().unwrap();
        assert_eq!(q.terms.len(), 2);
        assert_eq!(q.terms[1].1, NcWord(vec![Letter::XStar]));
        let q: NcPoly = "x*x".parse().unwrap();
        assert_eq!(q.terms[0].1, NcWord(vec![Letter::XStar, Letter::X]));
        let q: NcPoly = "2x - 0.5i x* + (1-2i)xx* + 1".parse().unwrap();
        assert_eq!(q.terms[0].0, c64(2.0, 0.0));
        assert_eq!(q.terms[1].0, c64(0.0, -0.5));
        assert_eq!(q.terms[2].0, c64(1.0, -2.0));
        assert!(q.terms[3].1 .0.is_empty());
        assert!((q.coefficient_bound(1.0) - (2.0 + 0.5 + 5f64.sqrt() + 1.0)).abs() < 1e-12);
        assert!("x + ".parse::<NcPoly>().is_err());
        assert!("y".parse::<NcPoly>().is_err());
        let q: NcPoly = "1e-3x".parse().unwrap();
        assert_eq!(q.terms[0].0, c64(1e-3, 0.0));
    }

    #[test]
    fn evaluates_words() {
        let x = crate::mat::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        let q: NcPoly = "x*x".parse().unwrap();
        assert_eq!(q.eval(&x), crate::mat::from_real_diagonal(&[0.0, 1.0]));
    }

    #[test]
    fn samples_are_exact_and_bounded() {
        for (roots, dim) in [
            (vec![(0.0, 2)], 2),
            (vec![(0.0, 2), (1.0, 2)], 8),
            (vec![(0.0, 3)], 6),
            (vec![(1.0, 1), (-1.0, 1)], 5),
        ] {
            let p = poly(&roots);
            for seed in 0..20 {
                let s = sample_representation(&p, dim, seed, &SampleOptions::default()).unwrap();
                assert!(s.residual <= 1e-10, "residual {}", s.residual);
                assert!(s.norm <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn symmetry_samples_are_normal() {
        let p = poly(&[(1.0, 1), (-1.0, 1)]);
        let s = sample_representation(&p, 4, 3, &SampleOptions::default()).unwrap();
        assert!(opnorm(&(&s.x - s.x.adjoint())) < 1e-12);
        assert!((s.norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn estimate_is_deterministic_and_bounded() {
        let p = poly(&[(0.0, 2)]);
        let q: NcPoly = "x + x*".parse().unwrap();
        let a = estimate_norm(&q, &p, &[2, 4], 30, 11, &SampleOptions::default()).unwrap();
        let b = estimate_norm(&q, &p, &[2, 4], 30, 11, &SampleOptions::default()).unwrap();
        assert_eq!(a.lower_bound.to_bits(), b.lower_bound.to_bits());
        assert!(a.lower_bound <= 1.0 + 1e-9);
        assert!(a.lower_bound > 0.9);
    }
}
