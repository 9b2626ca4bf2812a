use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate dataset: {0}")]
    DegenerateDataset(String),

    #[error("{kind} id {id} out of range (count {count})")]
    OutOfRange {
        kind: &'static str,
        id: usize,
        count: usize,
    },

    #[error("invalid hyperedge {index}: {reason}")]
    InvalidEdge { index: usize, reason: String },

    #[error("mapping is not a bijection on 0..{0}")]
    NotBijection(usize),

    #[error("empty vertex set")]
    EmptySet,

    #[error("vertex sets overlap")]
    Overlap,

    #[error("brute-force limit exceeded: {0}")]
    SizeLimit(String),

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("pool underfull: {available} vertices for subsets of size {wanted}")]
    PoolUnderfull { available: usize, wanted: usize },

    #[error("edge of size {0} is not eligible for expansion (needs >= 3)")]
    Ineligible(usize),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("dataset format: {0}")]
    Format(String),

    #[error("config: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
