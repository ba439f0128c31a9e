//! Crate-wide error type.
//!
//! Variants are grouped by failure domain so callers (notably the CLI, which
//! maps errors onto exit codes) can distinguish usage problems from data
//! problems from numeric failures.

use std::path::PathBuf;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A text header or stream could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A signal format code this crate does not decode.
    #[error("unsupported signal format: {0}")]
    UnsupportedFormat(String),

    /// Binary input ended mid-record.
    #[error("truncated input: {0}")]
    TruncatedInput(String),

    /// Annotation stream ended without its zero terminator.
    #[error("unexpected end of annotation stream")]
    UnexpectedEof,

    /// Tensor operands have incompatible shapes.
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    /// An API contract was violated (e.g. backward from a non-scalar).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A model configuration is internally inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Batch-norm statistics requested before any training step produced them.
    #[error("batch statistics are uninitialized; run a training step first")]
    UninitializedStatistics,

    /// A class does not have enough windows for the requested split.
    #[error("insufficient data for class {class}: have {have}, need {need}")]
    InsufficientData {
        class: &'static str,
        have: usize,
        need: usize,
    },

    /// Training or optimization produced a non-finite value.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Checkpoint file is malformed or from an incompatible version.
    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    /// Wrapper around I/O errors with the offending path attached.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }
}
