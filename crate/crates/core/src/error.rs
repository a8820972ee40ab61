//! Error type shared by the whole crate.

use thiserror::Error;

/// Errors produced by chart, flow, averaging and integration operations.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A coordinate is NaN or infinite.
    #[error("invalid point: non-finite coordinate at index {index}")]
    InvalidPoint { index: usize },

    /// A vector or matrix has the wrong length for the manifold at hand.
    #[error("dimension error: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// Two points (or a point and an operator) live on different manifolds.
    #[error("dimension error: manifold specs do not match")]
    SpecMismatch,

    /// A parameter is outside its documented range.
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter {
        name: &'static str,
        reason: &'static str,
    },

    /// The adaptive integrator drove the step size below the representable
    /// floor; the problem is effectively stiff for this method.
    #[error("stiffness error: step size underflow at t = {t}")]
    Stiffness { t: f64 },

    /// A projection dimension leaves non-radial coordinates outside the
    /// isochronous slice, so the periodic start point is not defined.
    #[error("unsupported projection: trailing coordinate {index} is not radial")]
    UnsupportedProjection { index: usize },
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
