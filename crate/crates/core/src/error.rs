use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid rollout group: {0}")]
    InvalidGroup(String),
    #[error("degenerate success probability {0}: advantages are undefined at 0 and 1")]
    DegenerateProbability(f64),
    #[error("malformed rollout: {0}")]
    MalformedRollout(String),
    #[error("mixed-batch violation: {correct} of {group_size} rollouts correct")]
    MixedBatchViolation { correct: usize, group_size: usize },
    #[error("invalid size: {0}")]
    InvalidSize(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("insufficient candidates: need {needed}, dataset has {available}")]
    InsufficientCandidates { needed: usize, available: usize },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("alignment error: baseline has {available} steps, need {needed}")]
    Alignment { needed: u64, available: u64 },
    #[error("invalid config key `{key}`: {reason}")]
    Config { key: String, reason: String },
    #[error("empty report: {0}")]
    EmptyReport(String),
    #[error("unknown question {0}: not awaiting feedback")]
    UnknownQuestion(u64),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("server error ({code}): {reason}")]
    Remote { code: String, reason: String },
    #[error("transport error (retriable): {0}")]
    Transport(#[source] std::io::Error),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("plot error: {0}")]
    Plot(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable short code used in wire error frames.
    pub fn code(&self) -> &'static str {
        match self {
            Error::UnknownQuestion(_) => "unknown-question",
            Error::InvalidGroup(_) => "invalid-rewards",
            Error::Protocol(_) | Error::Json(_) => "malformed-frame",
            Error::InsufficientCandidates { .. } => "insufficient-candidates",
            Error::Remote { .. } => "remote",
            Error::Transport(_) => "transport",
            _ => "internal",
        }
    }

    /// Whether the operation may succeed if retried on a fresh connection.
    pub fn is_retriable(&self) -> bool {
        matches!(self, Error::Transport(_))
    }
}
