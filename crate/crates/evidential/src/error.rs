//! Error type shared across the library.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Input outside a function's mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Mismatched vector/matrix dimensions.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Invalid configuration value.
    #[error("config error: {0}")]
    Config(String),

    /// Numerical failure (NaN loss, singular matrix, ...).
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Evaluation-protocol violation (e.g. empty positive class).
    #[error("protocol error: {0}")]
    Protocol(String),

    /// Malformed file content.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
