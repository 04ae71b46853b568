use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the retrieval engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Malformed planner output or combine expression. `offset` is a character
    /// offset into the text that was being parsed, when one is meaningful.
    #[error("parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    /// A caller broke an operation's precondition (missing id, length mismatch).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("missing data: {message} (expected at {})", path.display())]
    MissingData { path: PathBuf, message: String },

    #[error("provider error: {0}")]
    Provider(String),

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn parse(offset: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            message: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
