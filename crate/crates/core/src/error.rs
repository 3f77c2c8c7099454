//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by tensor operations, models, and the bridge protocol.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a precondition (empty tensor, even-kernel, bad config value, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Tensor shapes that must agree do not.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A manipulation model failed (surrogate misuse, bridge transport failure, remote error).
    #[error("model error: {0}")]
    Model(String),

    /// The bridge wire protocol was violated (bad magic, version mismatch, malformed frame).
    #[error("protocol error: {0}")]
    Protocol(String),

    /// A run configuration is contradictory or incomplete.
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape_mismatch(what: &str, a: (usize, usize, usize), b: (usize, usize, usize)) -> Self {
        Error::Shape(format!("{what}: {}x{}x{} vs {}x{}x{}", a.0, a.1, a.2, b.0, b.1, b.2))
    }
}
