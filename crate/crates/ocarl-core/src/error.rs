//! Error taxonomy shared across the crate.

use alloc::string::String;
use core::fmt;

/// Failure categories for fallible operations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// Tensor, grid, or sequence shapes do not line up.
    Dimension(String),
    /// An argument value lies outside the operation's domain.
    Argument(String),
    /// The receiver is not in a state that allows the call.
    State(String),
    /// A configuration is internally inconsistent.
    Config(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension(msg) => write!(f, "dimension error: {msg}"),
            Error::Argument(msg) => write!(f, "argument error: {msg}"),
            Error::State(msg) => write!(f, "state error: {msg}"),
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

/// Shorthand constructors; error messages are built at the call site.
impl Error {
    pub fn dimension(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
    pub fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
    pub fn state(msg: impl Into<String>) -> Self {
        Error::State(msg.into())
    }
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
