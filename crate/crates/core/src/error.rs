use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("matrix is singular to working precision (condition estimate {condition:.3e})")]
    Singular { condition: f64 },

    #[error("{what} would materialize {requested} entries, above the cap of {cap}")]
    TooLarge {
        what: &'static str,
        requested: u128,
        cap: u128,
    },

    #[error("solver failed: {0}")]
    Solver(String),

    #[error("newton iteration diverged after {iterations} iterations (loss history {history:?})")]
    Diverged {
        iterations: usize,
        history: Vec<f64>,
    },

    #[error("malformed train container: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

pub(crate) fn mismatch(msg: impl Into<String>) -> Error {
    Error::ShapeMismatch(msg.into())
}
