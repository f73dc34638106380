//! Error taxonomy shared by every module.
//!
//! The split matters to callers: `Validation`/`Domain`/`Range` are caller
//! mistakes, `NonConvergence` means a resource cap was hit (the message keeps
//! the partial state needed to retry with a larger budget), `Structure` means
//! a certified structural property failed to verify numerically, and
//! `BoundaryReflection` flags a propagation run whose lattice was too small.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input: empty grids, non-finite values, zero off-diagonals…
    #[error("validation: {0}")]
    Validation(String),

    /// An iteration cap or memory cap was reached before the tolerance.
    #[error("did not converge: {0}")]
    NonConvergence(String),

    /// Input outside the mathematical domain of the quantity (e.g. a
    /// coupling below the trace-map escape threshold).
    #[error("domain: {0}")]
    Domain(String),

    /// A certified structural invariant failed (band counts, bracketing…).
    #[error("structure: {0}")]
    Structure(String),

    /// Request reaches past the available coefficient range.
    #[error("range: {0}")]
    Range(String),

    /// Wavepacket mass reached the artificial lattice edge.
    #[error("boundary reflection: {0}")]
    BoundaryReflection(String),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn non_convergence(msg: impl Into<String>) -> Self {
        Error::NonConvergence(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn structure(msg: impl Into<String>) -> Self {
        Error::Structure(msg.into())
    }

    pub fn range(msg: impl Into<String>) -> Self {
        Error::Range(msg.into())
    }
}
