use thiserror::Error;

/// Errors raised by the library. Every variant signals a caller bug or an
/// unusable input, never statistical noise.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{what} = {value} outside domain [{lo}, {hi}]")]
    Domain {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("example {index}: {source}")]
    AtExample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn at(index: usize, err: Error) -> Self {
        Error::AtExample {
            index,
            source: Box::new(err),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
