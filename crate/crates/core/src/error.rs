use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the analysis stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("input too short: need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("input contains NaN")]
    NanInput,

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("unknown channel `{0}`")]
    UnknownChannel(String),

    #[error("malformed file {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },

    #[error("missing file {0}")]
    MissingFile(PathBuf),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("feature schema mismatch: model expects {expected}, got {actual}")]
    SchemaMismatch { expected: String, actual: String },

    #[error("undefined statistic: {0}")]
    Undefined(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
