//! Crate-wide error type.

use thiserror::Error;

/// Errors reported by matrix construction, kernels, planning, and the
/// benchmark harness.
#[derive(Debug, Error)]
pub enum Error {
    /// A matrix violates a structural invariant (index out of bounds,
    /// duplicate coordinate, mismatched array lengths).
    #[error("format error: {0}")]
    Format(String),

    /// An operation parameter is outside its admissible range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// A MatrixMarket file could not be parsed.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Operand shapes are incompatible.
    #[error("shape error: {0}")]
    Shape(String),

    /// A launch plan does not match the request it is executed against.
    #[error("plan error: {0}")]
    Plan(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub(crate) fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn plan(msg: impl Into<String>) -> Self {
        Error::Plan(msg.into())
    }
}
