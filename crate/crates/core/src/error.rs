use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("no fixture for query `{key}` (looked for {})", path.display())]
    MissingFixture { key: String, path: PathBuf },

    #[error("no embedding for image `{0}`")]
    MissingEmbedding(String),

    #[error("missing data: {0}")]
    MissingData(String),

    #[error("search backend failed after {attempts} attempts: {message}")]
    Retryable { attempts: u32, message: String },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("{}: {source}", path.display())]
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

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    MissingData,
    Numeric,
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Invalid(_) | Error::Csv(_) | Error::Json(_) => ErrorKind::Validation,
            Error::MissingFixture { .. }
            | Error::MissingEmbedding(_)
            | Error::MissingData(_)
            | Error::Retryable { .. }
            | Error::Io { .. } => ErrorKind::MissingData,
            Error::Numeric(_) => ErrorKind::Numeric,
        }
    }
}
