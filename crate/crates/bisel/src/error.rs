use thiserror::Error;

/// Errors produced by model construction, fitting, and simulation.
#[derive(Debug, Error)]
pub enum Error {
    /// Inputs violate a documented precondition (bad sizes, negative scales, ...).
    #[error("invalid input: {0}")]
    Validation(String),

    /// Array shapes do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A numerical operation failed (non-finite values, failed factorization,
    /// step-size underflow).
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn dimension(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
