use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse error classes, used by the command line to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: line {line}: {message}")]
    MalformedRow {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{0}: no interactions found")]
    EmptyInput(PathBuf),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("dimension mismatch: expected {expected} items, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// Cholesky pivot `pivot_value` at position `pivot` was not positive.
    #[error(
        "{context}: matrix is not positive definite (pivot {pivot} = {pivot_value:e}); \
         increase lambda or remove duplicated items"
    )]
    NotPositiveDefinite {
        context: String,
        pivot: usize,
        pivot_value: f64,
    },

    #[error("mean vector is degenerate for the constrained solve: {0}")]
    DegenerateMean(String),

    #[error("malformed model file: {0}")]
    ModelFormat(String),
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) => ErrorCategory::Config,
            Error::NotPositiveDefinite { .. } | Error::DegenerateMean(_) => {
                ErrorCategory::Numerical
            }
            Error::Io { .. }
            | Error::MalformedRow { .. }
            | Error::EmptyInput(_)
            | Error::Data(_)
            | Error::DimensionMismatch { .. }
            | Error::ModelFormat(_) => ErrorCategory::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
