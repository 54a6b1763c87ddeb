use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the simulator, the filter and the experiment harness.
#[derive(Debug, Error)]
pub enum BetisError {
    #[error("invalid value for `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("dimension mismatch: {what} (expected {expected}, got {actual})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("time index mismatch: {what} is at k={actual}, expected k={expected}")]
    TimeMismatch {
        what: &'static str,
        expected: u32,
        actual: u32,
    },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("report {report} has zero probability under the current belief")]
    DegenerateEvidence { report: &'static str },

    #[error("unknown scenario suite `{0}`")]
    UnknownSuite(String),

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("malformed input in {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl BetisError {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        BetisError::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        BetisError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, BetisError>;
