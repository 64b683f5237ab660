use thiserror::Error;

use crate::alignment::AlignmentSolution;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("document `{0}` is empty after trimming whitespace")]
    EmptyDocument(String),

    #[error("backend error{}: {message}", status.map(|s| format!(" (HTTP {s})")).unwrap_or_default())]
    Backend { status: Option<u16>, message: String },

    #[error("malformed model output: {0}")]
    MalformedOutput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("chunk id {chunk_id} out of range for {num_chunks} chunks")]
    ChunkIdOutOfRange { chunk_id: usize, num_chunks: usize },

    #[error("no entities were extracted; the index would be empty")]
    IndexEmpty,

    #[error("corpus at `{0}` contains no .txt or .md documents")]
    EmptyCorpus(String),

    #[error("index schema version {found} is not supported (expected {expected})")]
    SchemaVersionMismatch { found: u32, expected: u32 },

    #[error("singular linear system")]
    SingularSystem,

    #[error("utility solver did not converge after {} iterations", best.iterations)]
    NonConvergence { best: Box<AlignmentSolution> },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn backend(status: Option<u16>, message: impl Into<String>) -> Self {
        Error::Backend {
            status,
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidConfig(message.into())
    }
}
