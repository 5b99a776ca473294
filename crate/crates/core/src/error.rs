use std::io;

use thiserror::Error;

/// Errors raised anywhere in the hands-on detection pipeline.
#[derive(Debug, Error)]
pub enum HodError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },

    #[error("training failed: {0}")]
    Training(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, HodError>;

impl HodError {
    pub(crate) fn format(what: &'static str, reason: impl Into<String>) -> Self {
        HodError::Format {
            what,
            reason: reason.into(),
        }
    }
}
