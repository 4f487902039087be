use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    /// A near-identity or monotonicity precondition failed during factorization.
    #[error("precondition violated at level {level}: {reason} (measured delta = {delta:.6e}, threshold = {threshold:.6e})")]
    Precondition {
        level: usize,
        delta: f64,
        threshold: f64,
        reason: String,
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn shape(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}
