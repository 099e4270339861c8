use thiserror::Error;

/// Errors produced by model construction, numerics and verification.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular nonlinear field: chaser at the centre of the Earth")]
    Singularity,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("Riccati solve did not converge: {0}")]
    Convergence(String),

    #[error("controller design failed: {0}")]
    Design(String),

    #[error("numerical overflow: {0}")]
    Overflow(String),

    #[error("configuration error at {pointer}: {message}")]
    Config { pointer: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            pointer: pointer.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
