use std::io;

use thiserror::Error;

/// Errors produced by the embedding pipeline and its supporting modules.
#[derive(Debug, Error)]
pub enum HnneError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, HnneError>;

pub(crate) fn invalid_argument(msg: impl Into<String>) -> HnneError {
    HnneError::InvalidArgument(msg.into())
}

pub(crate) fn invalid_data(msg: impl Into<String>) -> HnneError {
    HnneError::InvalidData(msg.into())
}
