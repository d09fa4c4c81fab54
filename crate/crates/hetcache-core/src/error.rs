//! Error type shared by every solver module.

use thiserror::Error;

/// Errors produced by scenario handling, sampling and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    /// A scenario document does not conform to the schema.
    #[error("parse error: {0}")]
    Parse(String),

    /// A configuration or instance invariant does not hold.
    #[error("validation error: {0}")]
    Validation(String),

    /// An argument lies outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Rejection sampling could not place a point in a region.
    #[error("geometry error: {0}")]
    Geometry(String),

    /// The backhaul-dominance assumption fails on sampled data.
    #[error("model assumption violated: {0}")]
    Assumption(String),

    /// Per-pico load curves differ too much for the homogeneous solver.
    #[error("heterogeneous load curves: {0}")]
    Heterogeneous(String),

    /// An internal consistency check failed after a solve.
    #[error("internal consistency error: {0}")]
    Internal(String),

    /// An instance exceeds the enumeration bounds of the oracle.
    #[error("oracle bounds exceeded: {0}")]
    OracleBounds(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
