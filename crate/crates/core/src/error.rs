//! Error types shared across the crate.

use thiserror::Error;

/// Top-level error for the pipeline. Each variant family maps to one CLI
/// exit code: configuration errors exit 1, data errors exit 2, numerical
/// failures exit 3.
#[derive(Debug, Error)]
pub enum BounderError {
    #[error("config: {0}")]
    Config(String),

    #[error("io: {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("weight csv: malformed header at line {line}: {detail}")]
    MalformedHeader { line: usize, detail: String },

    #[error("weight csv: dimension mismatch at line {line}: {detail}")]
    DimensionMismatch { line: usize, detail: String },

    #[error("weight csv: unparsable number at line {line}: {token:?}")]
    UnparsableNumber { line: usize, token: String },

    #[error("data: {0}")]
    Data(String),

    #[error("dimension error: expected {expected}, got {got} ({context})")]
    Dimension {
        expected: usize,
        got: usize,
        context: String,
    },

    #[error("dynamics blowup at step {step}: non-finite state")]
    DynamicsBlowup { step: u64 },

    #[error("reference controller fell at control step {step} ({reason})")]
    ReferenceFell { step: usize, reason: String },

    #[error("divergence: non-finite loss in phase {phase} iteration {iteration}")]
    Divergence { phase: usize, iteration: usize },

    #[error("numerical: {0}")]
    Numerical(String),
}

impl BounderError {
    /// CLI exit code for this error (0 is success, never produced here).
    pub fn exit_code(&self) -> i32 {
        match self {
            BounderError::Config(_) => 1,
            BounderError::Io { .. }
            | BounderError::MalformedHeader { .. }
            | BounderError::DimensionMismatch { .. }
            | BounderError::UnparsableNumber { .. }
            | BounderError::Data(_)
            | BounderError::Dimension { .. } => 2,
            BounderError::DynamicsBlowup { .. }
            | BounderError::ReferenceFell { .. }
            | BounderError::Divergence { .. }
            | BounderError::Numerical(_) => 3,
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        BounderError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, BounderError>;
