use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, LsedError>;

#[derive(Debug, Error)]
pub enum LsedError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("incompatible operands: {0}")]
    Incompatible(String),

    #[error("malformed {format} data: {reason}")]
    Format { format: &'static str, reason: String },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl LsedError {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        LsedError::Config(msg.into())
    }

    pub(crate) fn format(format: &'static str, reason: impl Into<String>) -> Self {
        LsedError::Format {
            format,
            reason: reason.into(),
        }
    }

    pub(crate) fn dims(expected: usize, actual: usize) -> Self {
        LsedError::DimensionMismatch { expected, actual }
    }
}
