use thiserror::Error;

/// Errors raised by the library. Variants map onto the CLI exit classes.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid structure: {0}")]
    Structural(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("resource budget exceeded: {what} needs {required} cells, budget is {budget}")]
    Resource {
        what: &'static str,
        required: u128,
        budget: u128,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("{}usage error in `{field}`: {message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Usage {
        field: String,
        line: Option<usize>,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn usage(
        field: impl Into<String>,
        line: Option<usize>,
        message: impl Into<String>,
    ) -> Self {
        Error::Usage {
            field: field.into(),
            line,
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
