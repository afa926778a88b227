use alloc::boxed::Box;
use alloc::string::String;

use crate::feature::ValidationReport;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Broad classification of failures, used by callers to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    InvalidInput,
    Data,
    Numeric,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dataset failed validation: {0}")]
    Validation(ValidationReport),
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("protocol construction failed: {0}")]
    Protocol(String),
    #[error("training data: {0}")]
    TrainingData(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, with all context layers removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self.root() {
            Error::InvalidInput(_) => ErrorKind::InvalidInput,
            Error::Numeric(_) => ErrorKind::Numeric,
            _ => ErrorKind::Data,
        }
    }
}
