use thiserror::Error;

/// Errors raised by the darkline solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("operation requires a {expected} scheme, got {found}")]
    WrongScheme { expected: String, found: String },

    #[error("degenerate parameters: {0}")]
    Degenerate(String),

    #[error("undefined result: {0}")]
    Undefined(String),

    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("invalid integration settings: {0}")]
    InvalidIntegration(String),

    #[error("trajectory diverged at t = {time} (state norm {norm:e})")]
    Diverged { time: f64, norm: f64 },

    #[error("unknown parameter path `{0}`")]
    UnknownPath(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    pub(crate) fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
