use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated an operation's preconditions.
    #[error("contract violation: {0}")]
    Contract(String),
    /// Dense-size guardrail exceeded.
    #[error("resource limit: {0}")]
    Resource(String),
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("format error at {location}: {message}")]
    Format { location: String, message: String },
    /// |S_ij| below the division floor; carries both estimates so callers can widen the budget.
    #[error("unreliable division: |S| = {:.3e} < delta = {delta} (numerator {numerator})", overlap.norm())]
    UnreliableDivision {
        numerator: Complex64,
        overlap: Complex64,
        delta: f64,
    },
    #[error("degenerate: {0}")]
    Degenerate(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
