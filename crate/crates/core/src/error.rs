use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid action: {0}")]
    InvalidAction(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("state is terminal, no action available")]
    TerminalState,

    #[error("score cache does not match the current mask: {0}")]
    CacheInvalid(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("target sparsity {target} outside curve range [{min}, {max}]")]
    OutOfRange { target: f64, min: f64, max: f64 },

    #[error("episode truncated after {0} steps without reaching a terminal state")]
    Truncated(usize),

    #[error("malformed model file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(expected: usize, got: usize) -> Self {
        Error::Dimension { expected, got }
    }
}
