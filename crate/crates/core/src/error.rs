use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("EDF error at byte {offset}: {message}")]
    Edf { offset: u64, message: String },

    #[error("missing electrode {electrode} (needed by {})", pairs.join(", "))]
    MissingElectrode { electrode: String, pairs: Vec<String> },

    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },

    #[error("feature cache: {0}")]
    Cache(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("fold assignment: {0}")]
    Fold(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Whether the failure originates in input data rather than in the run itself.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Edf { .. }
                | Error::MissingElectrode { .. }
                | Error::Manifest { .. }
                | Error::Cache(_)
                | Error::Checkpoint(_)
                | Error::Fold(_)
        )
    }
}
