use thiserror::Error;

/// Errors raised by the estimation engine and its building blocks.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("non-finite log-density {value} at particle {index} (observation rejected)")]
    NonFiniteLogDensity { index: usize, value: f64 },

    #[error("scale matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("data error: {0}")]
    Data(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
