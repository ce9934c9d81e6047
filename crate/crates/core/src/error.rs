use thiserror::Error;

use crate::mat::C64;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix has non-finite entries")]
    NonFinite,

    #[error("matrix is not Hermitian (relative defect {defect:.3e})")]
    NotHermitian { defect: f64 },

    #[error("matrix is not positive definite (eigenvalue {eigenvalue:.3e})")]
    NotPositiveDefinite { eigenvalue: f64 },

    #[error("similarity transform is singular (condition number {cond:.3e})")]
    SingularTransform { cond: f64 },

    #[error("invalid polynomial: {0}")]
    InvalidPolynomial(String),

    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),

    #[error("operation requires regime {expected}, polynomial is {found}")]
    RegimeMismatch { expected: String, found: String },

    #[error(
        "ambiguous cluster: eigenvalue {eigenvalue} is {distance:.3e} from nearest root {nearest}{}",
        second.map(|s| format!(" (next root {s})")).unwrap_or_default()
    )]
    ClusterAmbiguous {
        eigenvalue: C64,
        nearest: C64,
        second: Option<C64>,
        distance: f64,
    },

    #[error("metric element is singular (smallest eigenvalue {min_eigenvalue:.3e})")]
    MetricSingular { min_eigenvalue: f64 },

    #[error("spectral data ill-conditioned: {quantity} defect {defect:.3e} exceeds {tol:.3e}")]
    IllConditioned {
        quantity: &'static str,
        defect: f64,
        tol: f64,
    },

    #[error("no singular value gap at chain level {level} (ratio {ratio:.3})")]
    ChainGapFailure { level: usize, ratio: f64 },

    #[error("residual {residual:.3e} exceeds spectral gap threshold {threshold:.3e}")]
    GapTooWide { residual: f64, threshold: f64 },

    #[error("input outside the basin of stability: {0}")]
    OutsideBasin(#[source] Box<Error>),

    #[error(
        "norm bound {bound:.6} unreachable: semisimple part has norm {skeleton_norm:.6} (cond(s) = {cond_s:.3e})"
    )]
    CapUnreachable {
        bound: f64,
        skeleton_norm: f64,
        cond_s: f64,
    },

    #[error("exactness lost: residual {residual:.3e} exceeds budget {budget:.3e}")]
    ExactnessLost { residual: f64, budget: f64 },

    #[error("root {root} lies outside the norm bound {bound}")]
    RootOutsideBound { root: C64, bound: f64 },

    #[error("{0} did not converge")]
    NoConvergence(&'static str),

    #[error("invalid sequence: {0}")]
    InvalidSequence(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("malformed input: {0}")]
    Format(String),
}

impl Error {
    /// Mathematically meaningful refusals (regime or basin) as opposed to
    /// operational failures.
    pub fn is_refusal(&self) -> bool {
        matches!(
            self,
            Error::UnsupportedRegime(_)
                | Error::RegimeMismatch { .. }
                | Error::ClusterAmbiguous { .. }
                | Error::MetricSingular { .. }
                | Error::IllConditioned { .. }
                | Error::ChainGapFailure { .. }
                | Error::GapTooWide { .. }
                | Error::OutsideBasin(_)
                | Error::CapUnreachable { .. }
                | Error::ExactnessLost { .. }
        )
    }

    pub(crate) fn outside_basin(self) -> Error {
        match self {
            e @ (Error::ClusterAmbiguous { .. }
            | Error::MetricSingular { .. }
            | Error::IllConditioned { .. }
            | Error::ChainGapFailure { .. }
            | Error::NoConvergence(_)) => Error::OutsideBasin(Box::new(e)),
            e => e,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            Error::Io(e.into())
        } else {
            Error::Format(e.to_string())
        }
    }
}
