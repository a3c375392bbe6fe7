use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("{}: row {row}, column {col}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        row: usize,
        col: usize,
        msg: String,
    },

    #[error("unknown site `{0}` (schema must be built from the cohort first)")]
    UnknownSite(String),

    #[error("only one class present in {0}")]
    SingleClass(String),

    #[error("cache is stale: {0}")]
    StaleCache(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("malformed file {}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// True for failures caused by the numbers themselves rather than by the
    /// data layout (non-finite values, diverged training).
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
