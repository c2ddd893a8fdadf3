use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = DacError> = std::result::Result<T, E>;

/// Coarse classification used for process exit codes and C error codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Numeric,
    Io,
}

#[derive(Debug, Error)]
pub enum DacError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: line {line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("{path}: byte offset {offset}: {msg}")]
    Binary { path: PathBuf, offset: u64, msg: String },

    #[error("state dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("action out of range: action {action} with action_count {action_count}")]
    ActionOutOfRange { action: usize, action_count: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("insufficient support: action {action} has {available} tuples, {required} required")]
    InsufficientSupport { action: usize, available: usize, required: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("value iteration diverged at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("step called on a terminated episode")]
    StepAfterTerminal,

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl DacError {
    pub fn category(&self) -> ErrorCategory {
        match self {
            DacError::Config(_) => ErrorCategory::Config,
            DacError::NonFinite(_) | DacError::Diverged { .. } => ErrorCategory::Numeric,
            DacError::Io { .. } => ErrorCategory::Io,
            _ => ErrorCategory::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DacError::Io { path: path.into(), source }
    }
}
