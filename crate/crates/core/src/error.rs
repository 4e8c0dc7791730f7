use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("synthesis failed: {0}")]
    Synthesis(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("certification failed: {0}")]
    Certification(String),

    #[error("invalid scenario: {0}")]
    Invalid(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by malformed user input rather than by a
    /// failed design or certification.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Invalid(_) | Error::Parse(_) | Error::Io(_) | Error::Dimension(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err(msg: impl Into<String>) -> Error {
    Error::Dimension(msg.into())
}
