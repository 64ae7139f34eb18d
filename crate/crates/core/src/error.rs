use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LdpError {
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("time grid mismatch: expected {expected} steps, got {got}")]
    GridMismatch { expected: usize, got: usize },

    #[error("divergent integral: {0}")]
    DivergentIntegral(String),

    #[error("model diffusion is unbounded; truncate it first")]
    UnboundedDiffusion,

    #[error("io error: {0}")]
    Io(String),
}

impl LdpError {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        LdpError::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for LdpError {
    fn from(err: std::io::Error) -> Self {
        LdpError::Io(err.to_string())
    }
}

impl From<csv::Error> for LdpError {
    fn from(err: csv::Error) -> Self {
        LdpError::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, LdpError>;
