use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the workbench.
#[derive(Debug, Error)]
pub enum SicError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("framing error: {0}")]
    Framing(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    /// Monomial branch `branch` (1-based) is linearly dependent on the lower-order branches
    /// under the estimated input distribution.
    #[error("degenerate distribution: branch {branch} is dependent on lower-order branches ({reason})")]
    DegenerateDistribution { branch: usize, reason: String },

    #[error("numeric fault at step {step}: {reason}")]
    NumericFault { step: usize, reason: String },

    #[error("scenario validation failed: {0}")]
    Validation(String),

    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, SicError>;

impl SicError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SicError::Io {
            path: path.into(),
            source,
        }
    }
}
