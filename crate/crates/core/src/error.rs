use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{what}: expected {expected} grid values, got {got}")]
    GridMismatch {
        what: String,
        expected: usize,
        got: usize,
    },

    #[error("value {value} is outside the domain of {dgf}")]
    Domain { dgf: String, value: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("dual root-finding failed: {0}")]
    RootFinding(String),

    #[error("non-finite value at iteration {iteration}: {detail}")]
    NonFinite { iteration: usize, detail: String },

    #[error("unknown token `{token}` (expected one of {expected})")]
    UnknownToken { token: String, expected: String },

    #[error("trace parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
