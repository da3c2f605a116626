use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { name: String, offset: usize },

    #[error("function `{name}` takes {expected} argument(s), got {found} (offset {offset})")]
    Arity {
        name: String,
        expected: usize,
        found: usize,
        offset: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("expression references theta but no theta value was supplied")]
    MissingTheta,

    #[error("{what} is not positive at x = {x} (value {value})")]
    Positivity { what: String, x: f64, value: f64 },

    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },

    #[error("Riccati solution blew up at t = {t}")]
    RiccatiBlowup { t: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("alpha = {0} is not present in the quantile table")]
    AlphaMissing(f64),

    #[error("quantile table is for {found}, test needs {expected}")]
    TableMismatch { expected: String, found: String },

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
