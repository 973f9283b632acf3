use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, AcplError>;

/// Every failure the engine can report.
#[derive(Debug, Error)]
pub enum AcplError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("label error at line {line}: {message}")]
    Label { line: usize, message: String },

    #[error("invalid label vector: {0}")]
    InvalidLabel(String),

    #[error("invalid dataset spec: {0}")]
    Spec(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("normalization error: {0}")]
    Normalization(String),

    #[error("index build error: {0}")]
    Build(String),

    #[error("mixture fit error: {0}")]
    Fit(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse failure class, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numeric,
}

impl AcplError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AcplError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        use AcplError::*;
        match self {
            Config(_) | Spec(_) => ErrorClass::Config,
            Parse { .. } | Schema(_) | Label { .. } | InvalidLabel(_) | Split(_) | Empty(_)
            | Io { .. } | Json(_) | Checkpoint(_) => ErrorClass::Data,
            Training(_) | Shape { .. } | Normalization(_) | Build(_) | Fit(_)
            | DegenerateData(_) | Consistency(_) | UndefinedMetric(_) => ErrorClass::Numeric,
        }
    }
}
