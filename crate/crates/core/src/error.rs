//! Crate-wide error type.
//!
//! One enum for the whole library; callers that need exit-code mapping
//! (the CLI) match on the variant.

use std::fmt;

#[derive(Debug)]
pub enum Error {
    /// Operand shapes do not line up for an op.
    Shape { context: String },
    /// A forward pass produced a NaN/inf; reports the offending graph node.
    NonFinite { node: usize, op: String },
    /// Bad argument to a library call (out-of-range rate, empty batch, ...).
    InvalidArgument(String),
    /// A fairness metric needs a stratum that is empty.
    UndefinedMetric { stratum: String },
    /// Malformed CSV input; `line` is 1-based and counts the header.
    Csv { line: usize, msg: String },
    /// Malformed or incompatible checkpoint/config payload.
    Format(String),
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape { context } => write!(f, "shape mismatch: {context}"),
            Error::NonFinite { node, op } => {
                write!(f, "non-finite value produced by node {node} ({op})")
            }
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::UndefinedMetric { stratum } => {
                write!(f, "metric undefined: empty stratum `{stratum}`")
            }
            Error::Csv { line, msg } => write!(f, "csv error at line {line}: {msg}"),
            Error::Format(msg) => write!(f, "format error: {msg}"),
            Error::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
