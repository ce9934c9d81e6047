//! Annihilating polynomials in factored form `∏ (t − λᵢ)^{kᵢ}` and regime
//! dispatch.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::{c64, identity, validate, Mat, C64};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Root {
    pub value: C64,
    pub multiplicity: u32,
}

impl Root {
    pub fn real(value: f64, multiplicity: u32) -> Self {
        Root {
            value: c64(value, 0.0),
            multiplicity,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    AllMultiple,
    AllSimpleReal,
    Unsupported,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::AllMultiple => "all-multiple",
            Regime::AllSimpleReal => "all-simple-real",
            Regime::Unsupported => "unsupported",
        })
    }
}

/// Monic polynomial with pairwise distinct roots, kept in stored order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolynomialJson", into = "PolynomialJson")]
pub struct Polynomial {
    roots: Vec<Root>,
    root_gap: f64,
}

#[derive(Serialize, Deserialize)]
struct RootJson {
    re: f64,
    #[serde(default)]
    im: f64,
    mult: u32,
}

#[derive(Serialize, Deserialize)]
struct PolynomialJson {
    roots: Vec<RootJson>,
}

impl TryFrom<PolynomialJson> for Polynomial {
    type Error = Error;

    fn try_from(j: PolynomialJson) -> Result<Self> {
        Polynomial::new(
            j.roots
                .into_iter()
                .map(|r| Root {
                    value: c64(r.re, r.im),
                    multiplicity: r.mult,
                })
                .collect(),
        )
    }
}

impl From<Polynomial> for PolynomialJson {
    fn from(p: Polynomial) -> Self {
        PolynomialJson {
            roots: p
                .roots
                .iter()
                .map(|r| RootJson {
                    re: r.value.re,
                    im: r.value.im,
                    mult: r.multiplicity,
                })
                .collect(),
        }
    }
}

impl Polynomial {
    pub fn new(roots: Vec<Root>) -> Result<Self> {
        if roots.is_empty() {
            return Err(Error::InvalidPolynomial("no roots".into()));
        }
        for r in &roots {
            if r.multiplicity == 0 {
                return Err(Error::InvalidPolynomial("multiplicity must be positive".into()));
            }
            if !(r.value.re.is_finite() && r.value.im.is_finite()) {
                return Err(Error::InvalidPolynomial("non-finite root".into()));
            }
        }
        let mut root_gap = f64::INFINITY;
        for (i, a) in roots.iter().enumerate() {
            for b in &roots[i + 1..] {
                root_gap = root_gap.min((a.value - b.value).norm());
            }
        }
        if root_gap <= 0.0 {
            return Err(Error::InvalidPolynomial("repeated root".into()));
        }
        Ok(Polynomial { roots, root_gap })
    }

    /// Real roots with multiplicities.
    pub fn from_real(roots: &[(f64, u32)]) -> Result<Self> {
        Polynomial::new(roots.iter().map(|&(v, k)| Root::real(v, k)).collect())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("polynomial serialization")
    }

    pub fn roots(&self) -> &[Root] {
        &self.roots
    }

    pub fn degree(&self) -> usize {
        self.roots.iter().map(|r| r.multiplicity as usize).sum()
    }

    /// Minimum pairwise root distance; infinite for a single root.
    pub fn root_gap(&self) -> f64 {
        self.root_gap
    }

    /// Radius of the disjoint disks around the roots used for eigenvalue
    /// clustering, spectral inclusion and the clamp plateaus.
    pub fn cluster_radius(&self) -> f64 {
        self.root_gap / 3.0
    }

    pub fn max_root_modulus(&self) -> f64 {
        self.roots.iter().map(|r| r.value.norm()).fold(0.0, f64::max)
    }

    pub fn eval_scalar(&self, t: C64) -> C64 {
        self.roots.iter().fold(c64(1.0, 0.0), |acc, r| {
            acc * (t - r.value).powu(r.multiplicity)
        })
    }

    pub fn regime(&self) -> Regime {
        classify(self)
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.roots {
            let v = r.value;
            let factor = if v.norm() == 0.0 {
                "t".to_string()
            } else if v.im == 0.0 {
                if v.re < 0.0 {
                    format!("(t+{})", -v.re)
                } else {
                    format!("(t-{})", v.re)
                }
            } else {
                format!("(t-({}{:+}i))", v.re, v.im)
            };
            if r.multiplicity == 1 {
                write!(f, "{factor}")?;
            } else {
                write!(f, "{factor}^{}", r.multiplicity)?;
            }
        }
        Ok(())
    }
}

pub fn classify(p: &Polynomial) -> Regime {
    let roots = p.roots();
    if roots.iter().all(|r| r.multiplicity >= 2) {
        Regime::AllMultiple
    } else if roots.iter().all(|r| r.multiplicity == 1 && r.value.im == 0.0) {
        Regime::AllSimpleReal
    } else {
        Regime::Unsupported
    }
}

/// Refusal with the reason spelled out.
pub fn require_supported(p: &Polynomial) -> Result<Regime> {
    match classify(p) {
        Regime::Unsupported => {
            let roots = p.roots();
            let mixed = roots.iter().any(|r| r.multiplicity >= 2)
                && roots.iter().any(|r| r.multiplicity == 1);
            Err(Error::UnsupportedRegime(
                if mixed {
                    "mixed multiplicities"
                } else {
                    "complex simple roots"
                }
                .into(),
            ))
        }
        r => Ok(r),
    }
}

/// `∏ (X − λᵢ I)^{kᵢ}`, factors multiplied left to right in stored order.
pub fn eval(p: &Polynomial, x: &Mat) -> Result<Mat> {
    let n = validate(x)?;
    let eye = identity(n);
    let mut acc = eye.clone();
    for r in p.roots() {
        let shifted = x - &eye * r.value;
        for _ in 0..r.multiplicity {
            acc = &acc * &shifted;
        }
    }
    Ok(acc)
}

/// Largest `δ` (up to a factor of 1/2) such that `|p(t)| ≤ δ` with `|t| ≤ C`
/// forces `t` into the union of the root disks of radius `cluster_radius`.
///
/// `1/p` is holomorphic on the excluded region, so `|p|` attains its minimum
/// there on the boundary: the root circles inside the disk of radius `C` and
/// the arc of `|t| = C` outside all root disks. Those curves are sampled with
/// spacing `root_gap / 1000` and the minimum is halved. With a single root the
/// disk radius is taken to be `C`.
pub fn spectral_gap_threshold(p: &Polynomial, bound: f64) -> Result<f64> {
    let regime = classify(p);
    if regime != Regime::AllSimpleReal {
        return Err(Error::RegimeMismatch {
            expected: Regime::AllSimpleReal.to_string(),
            found: regime.to_string(),
        });
    }
    if !(bound.is_finite() && bound > 0.0) {
        return Err(Error::InvalidArgument(format!("norm bound must be positive, got {bound}")));
    }
    let radius = if p.roots().len() > 1 {
        p.cluster_radius()
    } else {
        bound
    };
    let step = if p.roots().len() > 1 {
        p.root_gap() / 1000.0
    } else {
        radius / 1000.0
    };
    let samples = |rho: f64| ((std::f64::consts::TAU * rho / step).ceil() as usize).clamp(64, 4_000_000);
    let circle = |center: C64, rho: f64| {
        let m = samples(rho);
        (0..m).map(move |i| center + C64::from_polar(rho, std::f64::consts::TAU * i as f64 / m as f64))
    };
    let dist_to_roots = |t: C64| p.roots().iter().map(|r| (t - r.value).norm()).fold(f64::INFINITY, f64::min);
    let slack = 1e-12 * bound.max(1.0);

    let mut min_abs = f64::INFINITY;
    for r in p.roots() {
        for t in circle(r.value, radius).filter(|t| t.norm() <= bound + slack) {
            min_abs = min_abs.min(p.eval_scalar(t).norm());
        }
    }
    for t in circle(c64(0.0, 0.0), bound).filter(|&t| dist_to_roots(t) >= radius - slack) {
        min_abs = min_abs.min(p.eval_scalar(t).norm());
    }
    if !min_abs.is_finite() {
        // the root disks cover the whole disk; any threshold separating the
        // root circles themselves works
        for r in p.roots() {
            for t in circle(r.value, radius) {
                min_abs = min_abs.min(p.eval_scalar(t).norm());
            }
        }
    }
    Ok(0.5 * min_abs)
}
