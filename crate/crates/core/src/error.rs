//! Crate-wide error type.

use alloc::string::String;

/// Errors produced by parsing, graph construction, tensor ops and training.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A malformed input file; `line` is 1-based.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    /// Structurally invalid data (dangling references, bad invariants).
    #[error("invalid data: {0}")]
    Data(String),
    /// Tensor shape mismatch; names the op and the offending shapes.
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    /// Numerical failure (divergence, non-finite values).
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
