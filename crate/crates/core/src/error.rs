use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the declared domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// API misuse (mismatched keys, i ∈ S, ...).
    #[error("usage error: {0}")]
    Usage(String),
    /// Time-gated operation attempted at the wrong logical time.
    #[error("timing error: {0}")]
    Timing(String),
    /// Ciphertext/commitment failed an integrity check.
    #[error("integrity error: {0}")]
    Integrity(String),
    /// Bounded-retry generation (primes, blinding factors) exhausted.
    #[error("generation error: {0}")]
    Generation(String),
    /// Fixed-point arithmetic could not be made exact.
    #[error("arithmetic error: {0}")]
    Arithmetic(String),
    /// Audit could not complete (missing board entries etc.); counts as a platform fault.
    #[error("verification error: {0}")]
    Verification(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
