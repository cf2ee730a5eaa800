//! Crate-wide error type.

use std::fmt;
use std::io;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug)]
pub enum Error {
    /// Malformed text input; `line` is 1-based.
    Parse { line: usize, message: String },
    /// Structurally valid input that violates a contract (ranges, counts, labels).
    Validation(String),
    /// An invalid configuration value.
    Config(String),
    /// Tensor/prediction extents do not agree.
    Shape(String),
    /// Normalization denominator is zero (e.g. constant training set).
    DegenerateStats(String),
    /// Training diverged.
    Train {
        epoch: usize,
        batch: usize,
        message: String,
    },
    Io(io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Parse { line, message } => write!(f, "parse error at line {line}: {message}"),
            Error::Validation(msg) => write!(f, "validation error: {msg}"),
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Shape(msg) => write!(f, "shape error: {msg}"),
            Error::DegenerateStats(msg) => write!(f, "degenerate stats: {msg}"),
            Error::Train {
                epoch,
                batch,
                message,
            } => write!(f, "training error at epoch {epoch}, batch {batch}: {message}"),
            Error::Io(err) => write!(f, "io error: {err}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(err) => Some(err),
            _ => None,
        }
    }
}

impl From<io::Error> for Error {
    fn from(err: io::Error) -> Self {
        Error::Io(err)
    }
}
