use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("undeclared symbol \"{0}\"")]
    UndeclaredSymbol(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("rational overflow")]
    Overflow,
    #[error("not exactly representable in rational mode: {0}")]
    Inexact(String),
    #[error("insufficient jet order: need {need}, have {have}")]
    InsufficientOrder { need: usize, have: usize },
    #[error("degree mismatch: expected {expected}, found {found}")]
    DegreeMismatch { expected: usize, found: usize },
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("no metric configured")]
    NoMetric,
    #[error("spec error at {location}: {message}")]
    Spec { location: String, message: String },
    #[error("torsion-free violation at probe {probe}: {detail}")]
    Torsion { probe: String, detail: String },
    #[error("probe {0} outside the chart domain")]
    OutOfDomain(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
}

impl Error {
    pub fn spec(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Spec {
            location: location.into(),
            message: message.into(),
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Error::Invalid(message.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
