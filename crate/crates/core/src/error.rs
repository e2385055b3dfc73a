use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A geometric formula was evaluated outside its domain.
    #[error("geometry: {0}")]
    Geometry(String),

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("constraint violated: {0}")]
    Constraint(String),

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParam { field: String, reason: String },

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("non-finite value during {stage} (index {batch})")]
    NonFinite { stage: &'static str, batch: usize },

    #[error("missing gradient for parameter `{0}`")]
    MissingGrad(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn shape(
        context: &'static str,
        expected: impl std::fmt::Debug,
        actual: impl std::fmt::Debug,
    ) -> Self {
        Error::Shape {
            context,
            expected: format!("{expected:?}"),
            actual: format!("{actual:?}"),
        }
    }

    pub(crate) fn param(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
