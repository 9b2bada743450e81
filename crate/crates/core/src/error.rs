//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid input: schema mismatches, out-of-range arguments, degenerate
    /// configurations detected before any numerics run.
    #[error("validation error: {0}")]
    Validation(String),

    /// A numerical procedure failed: non-convergent quadrature or root find,
    /// singular systems, empty subgroups discovered mid-computation.
    #[error("computation error: {0}")]
    Computation(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn computation(msg: impl Into<String>) -> Self {
        Error::Computation(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
