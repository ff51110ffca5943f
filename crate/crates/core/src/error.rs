//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the simulator, estimator, and file layers.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated an operation precondition (bad argument value).
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A value fell outside a supported domain (e.g. time outside a trajectory).
    #[error("out of range: {0}")]
    Range(String),

    /// Scenario or grid configuration is invalid (schema violation, cell budget).
    #[error("configuration error: {0}")]
    Config(String),

    /// A log row failed validation; `line` is 1-based and includes the header.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A file did not match the expected format (header, column count).
    #[error("format error: {0}")]
    Format(String),

    /// Not enough reads to run the estimator.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A side prior excluded every peak in the likelihood map.
    #[error("prior violation: {0}")]
    PriorViolation(String),

    /// The estimate is ambiguous (two near-equal peaks, no side prior).
    #[error("ambiguous estimate: {0}")]
    Ambiguous(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the CLI: 2 configuration, 3 data, 4 ambiguity.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Ambiguous(_) => 4,
            Error::Argument(_)
            | Error::Range(_)
            | Error::Parse { .. }
            | Error::Format(_)
            | Error::InsufficientData(_)
            | Error::PriorViolation(_)
            | Error::Io(_) => 3,
        }
    }
}
