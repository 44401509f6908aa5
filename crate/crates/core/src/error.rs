use thiserror::Error;

/// Errors raised by the SPAR toolkit.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum SparError {
    /// An argument lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A numerical routine failed (non-convergence, bracketing failure, non-finite values).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Model fitting did not succeed.
    #[error("fitting error: {message}")]
    Fitting { message: String, trace: Vec<String> },

    /// A SPAR density was requested below the threshold function.
    #[error("point (r={r}, q={q}) lies below the threshold u(q)={threshold}; the model is only defined above it")]
    OutsideRegion { r: f64, q: f64, threshold: f64 },

    /// Invalid configuration or input shape.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl SparError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        SparError::Domain(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        SparError::Numerical(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, SparError>;
