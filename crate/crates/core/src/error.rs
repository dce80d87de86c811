use thiserror::Error;

/// Errors reported by state constructors, operators, and estimators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected n_max = {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error(
        "truncation failure: tail probability {tail:.3e} above {bound:.1e} at n_max = {n_max}"
    )]
    Truncation { tail: f64, bound: f64, n_max: usize },

    #[error("unitarity defect {defect:.3e} above {bound:.1e} (n_max = {n_max})")]
    UnitarityDefect { defect: f64, bound: f64, n_max: usize },

    #[error("norm drift {drift:.3e} above {bound:.1e} during propagation")]
    NormDrift { drift: f64, bound: f64 },

    #[error("calibration failed: no bracket for target n̄ = {target} in [{lo:.3e}, {hi:.3e}]")]
    NoBracket { target: f64, lo: f64, hi: f64 },

    #[error("ill-conditioned fit basis: condition number {cond:.3e}")]
    IllConditioned { cond: f64 },

    #[error("trace too short: duration {duration:.3e} s below {required:.3e} s needed to resolve the lowest sideband splitting")]
    TraceTooShort { duration: f64, required: f64 },

    #[error("empty distribution")]
    EmptyDistribution,

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("linear algebra failure: {0}")]
    Linalg(String),
}

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Linalg(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
