//! Crate-wide error type.

use crate::vector::Shape;
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A vector was passed to an operator or functional with a different shape.
    ShapeMismatch { expected: Shape, got: Shape },
    /// Invalid construction arguments (even kernel width, degenerate shape, ...).
    Invalid(String),
    /// A gradient was requested from a functional without one.
    NotSmooth(&'static str),
    /// A proximal map was requested from a functional without one.
    NotProxFriendly(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { expected, got } => {
                write!(f, "shape mismatch: expected {expected}, got {got}")
            }
            Error::Invalid(msg) => write!(f, "invalid argument: {msg}"),
            Error::NotSmooth(what) => write!(f, "functional `{what}` has no gradient"),
            Error::NotProxFriendly(what) => {
                write!(f, "functional `{what}` has no proximal operator")
            }
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Invalid(msg.into())
}
