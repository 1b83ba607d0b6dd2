use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {reason}")]
    Frame { path: PathBuf, reason: String },

    #[error("malformed volume container: {0}")]
    Format(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("volume {dims:?} is smaller than neighbourhood side {side}")]
    VolumeTooSmall {
        dims: (usize, usize, usize),
        side: usize,
    },

    #[error("protocol precondition failed: {0}")]
    Protocol(String),

    #[error("config line {line}: {reason}")]
    Config { line: usize, reason: String },

    #[error("model file: {0}")]
    Model(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn frame(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Frame {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
