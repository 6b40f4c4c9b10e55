use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the simulator.
///
/// Variants split along the line the CLI cares about: anything that is the
/// caller's fault (bad parameters, malformed files) is a configuration error;
/// everything else is a runtime failure.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    Shape {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("field is in the {actual:?} domain, operation requires {expected:?}")]
    Domain {
        expected: crate::grid::Domain,
        actual: crate::grid::Domain,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("malformed input {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps the error with a description of what was being attempted.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// True when the failure traces back to user-supplied input rather than
    /// to the computation itself.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) | Error::Shape { .. } | Error::Parse { .. } => true,
            Error::Context { source, .. } => source.is_config(),
            _ => false,
        }
    }
}
