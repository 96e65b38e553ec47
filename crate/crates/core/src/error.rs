use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("index {index} out of range for {len} {what}")]
    Index {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("edge ({0}, {1}) is not present in the graph")]
    MissingEdge(usize, usize),

    #[error("insufficient candidates: requested {requested}, pool has {available}")]
    InsufficientCandidates { requested: usize, available: usize },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("non-finite value: {0}")]
    Numeric(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("checkpoint format: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    /// Process exit code used by the command-line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Argument(_) => 2,
            Error::Numeric(_) => 3,
            _ => 4,
        }
    }
}
