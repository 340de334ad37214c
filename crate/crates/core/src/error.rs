use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("flat index {index} out of range for {len} parameters")]
    Range { index: usize, len: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// A probe produced a non-finite objective value.
    #[error("non-finite objective value {value} at flat coordinate {coordinate} (probe value {probe:?})")]
    Evaluation {
        coordinate: usize,
        probe: f64,
        value: f64,
    },

    #[error("non-finite update at flat coordinate {coordinate}: {detail}")]
    NonFinite { coordinate: usize, detail: String },

    #[error("unstable configuration: {0}")]
    Unstable(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
