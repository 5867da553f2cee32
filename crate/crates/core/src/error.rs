use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeomError {
    #[error("parse error at byte offset {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("guard violation: {0}")]
    Guard(String),
    #[error("non-finite value during evaluation: {0}")]
    NonFinite(String),
    #[error("expected a real value but the imaginary part is {0:e}")]
    NonReal(f64),
    #[error("point outside chart domain: {0}")]
    Domain(String),
    #[error("degenerate metric: {0}")]
    Degenerate(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("ineligible congruence: {0}")]
    Ineligible(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("integration failure: {0}")]
    Integration(String),
}

pub type Result<T> = std::result::Result<T, GeomError>;
