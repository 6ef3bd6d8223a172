use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: unknown {kind} label {label:?}")]
    UnknownLabel {
        path: PathBuf,
        line: usize,
        kind: &'static str,
        label: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate matrix: column {column} has residual norm {residual:e} after perturbation")]
    DegenerateMatrix { column: usize, residual: f64 },

    #[error("non-finite gradient at step {step} ({detail})")]
    NonFiniteGradient { step: u64, detail: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("query {index}: {message}")]
    Query { index: usize, message: String },

    #[error("data: {0}")]
    Data(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
