use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not symmetric: max |a_ij - a_ji| = {asymmetry:e}")]
    Asymmetric { asymmetry: f64 },

    #[error("non-finite entry at position {index}")]
    NonFinite { index: usize },

    #[error("eigen iteration did not converge after {iterations} sweeps (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("X^T X is singular in working precision: lambda_min / lambda_max = {ratio:e}")]
    Singular { ratio: f64 },

    #[error("under-determined task: need n > d, got n = {n}, d = {d}")]
    UnderDetermined { n: usize, d: usize },

    #[error("query alpha must be nonzero")]
    InvalidQuery,

    #[error("invalid step schedule: {0}")]
    InvalidSchedule(String),

    #[error("bound requires the constant 1/L step size: {0}")]
    ScheduleMismatch(String),

    #[error("theorem hypothesis violated: {0}")]
    HypothesisViolation(String),

    #[error("invalid task: {0}")]
    InvalidTask(String),

    #[error("malformed input: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}
