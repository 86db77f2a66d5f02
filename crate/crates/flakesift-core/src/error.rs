//! Error type shared by the core pipeline stages.

use alloc::string::String;
use core::fmt;

/// Errors raised by core operations.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// A label string did not parse to a [`crate::FlakinessCategory`].
    UnknownLabel(String),
    /// Two test cases share the same id.
    DuplicateId(String),
    /// An operation that needs a non-empty corpus received an empty one.
    EmptyCorpus,
    /// Mining needs at least two distinct categories to contrast.
    NoContrastClass,
    /// A numeric argument violated its contract.
    InvalidArgument(String),
    /// Tensor or vector shapes do not line up.
    ShapeMismatch(String),
    /// A gradient or logit became non-finite.
    NonFinite(String),
    /// Serialized data did not match the expected schema.
    Schema(String),
    /// A split-plan precondition failed (e.g. an uncovered project).
    Split(String),
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::UnknownLabel(s) => write!(f, "unknown label: {s:?}"),
            CoreError::DuplicateId(s) => write!(f, "duplicate test id: {s:?}"),
            CoreError::EmptyCorpus => write!(f, "corpus is empty"),
            CoreError::NoContrastClass => write!(f, "no contrast class: corpus has a single category"),
            CoreError::InvalidArgument(s) => write!(f, "invalid argument: {s}"),
            CoreError::ShapeMismatch(s) => write!(f, "shape mismatch: {s}"),
            CoreError::NonFinite(s) => write!(f, "non-finite value: {s}"),
            CoreError::Schema(s) => write!(f, "schema error: {s}"),
            CoreError::Split(s) => write!(f, "split error: {s}"),
        }
    }
}

pub type CoreResult<T> = core::result::Result<T, CoreError>;
