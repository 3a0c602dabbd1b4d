//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by unmixing, generation, and I/O routines.
#[derive(Debug, Error)]
pub enum UnmixError {
    /// Incompatible matrix or image dimensions.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// An argument failed validation (non-finite entries, empty input, bad range).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A numeric routine left the finite range.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Parse failure in a text input (CSV library, config); carries a location.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Underlying filesystem problem.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Malformed JSON header, config, or manifest.
    #[error("config error: {0}")]
    Config(String),

    /// The ADMM driver failed mid-run; the history gathered so far is attached.
    #[error("unmixing run failed at outer iteration {iteration}: {message}")]
    RunFailed {
        iteration: usize,
        message: String,
        history: Vec<crate::admm::IterationRecord>,
    },
}

pub type Result<T> = std::result::Result<T, UnmixError>;

impl UnmixError {
    /// Wraps an I/O error with the path it occurred on.
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        UnmixError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
