use std::io;

use thiserror::Error;

/// Errors produced across the engine.
///
/// Variants fall into two families that the CLI maps onto different exit
/// codes: malformed input (`Format`, `Json`, `Io`, `Missing`) and contract
/// violations (`Bounds`, `Dimension`, `Contract`).
#[derive(Debug, Error)]
pub enum Error {
    #[error("cell ({y}, {x}) is outside the {height}x{width} grid")]
    Bounds {
        y: usize,
        x: usize,
        height: usize,
        width: usize,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error("missing input: {0}")]
    Missing(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    /// True for errors caused by the caller's data rather than by broken
    /// invariants.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Format(_) | Error::Json(_) | Error::Io(_) | Error::Missing(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
