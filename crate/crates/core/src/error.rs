use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input document. `location` is a human readable position
    /// such as `line 3, column 14` or an element path.
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("unknown node id `{0}`")]
    UnknownNode(String),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("no legal edit candidates")]
    NoCandidates,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by bad user input (as opposed to failures
    /// during evaluation or search).
    pub fn is_input_error(&self) -> bool {
        matches!(self, Error::Parse { .. } | Error::Validation(_) | Error::UnknownNode(_))
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::parse(format!("line {}, column {}", e.line(), e.column()), e.to_string())
    }
}
