use thiserror::Error;

/// Errors produced by the numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A textual model or measure specification could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),
    /// The grid or solver configuration is invalid.
    #[error("configuration error: {0}")]
    Config(String),
    /// An iterative solver failed to converge.
    #[error("solver error: {message} (residual {residual:e})")]
    Solver { message: String, residual: f64 },
    /// The cascade oracle overflowed.
    #[error("oracle error: {0}")]
    Oracle(String),
    /// Inputs that do not belong together were combined.
    #[error("usage error: {0}")]
    Usage(String),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Solver { .. } | Error::Oracle(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
