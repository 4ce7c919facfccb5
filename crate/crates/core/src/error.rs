//! Error type shared by every module in this crate.

use thiserror::Error;

/// Crate-wide error enum.
///
/// `Domain` covers parameter/precondition violations, `Degenerate` covers
/// inputs that are structurally valid but carry no usable signal (all-zero
/// densities, flat spectra, fully-overlapping fit bands, ...). The remaining
/// variants carry enough context to act on: grid sizing, propagation-distance
/// guards, sampling guards, region bounds, and file-format diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its allowed domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// The evaluation grid does not cover the state: the nearest grid edge is
    /// closer to the origin than the required multiple of the widest Gaussian.
    #[error(
        "grid too small: needs to extend to |x| >= {required_m:.6e} m on every side, \
         nearest edge is at {extent_m:.6e} m"
    )]
    GridTooSmall { required_m: f64, extent_m: f64 },

    /// Transfer-function propagation past the aliasing limit of the grid.
    #[error(
        "propagation distance {z_m:.6e} m exceeds the grid's aliasing-safe range \
         (|z| <= {max_safe_m:.6e} m); enlarge the grid or split the hop"
    )]
    AliasingGuard { z_m: f64, max_safe_m: f64 },

    /// A slit opening is not resolved by enough grid samples.
    #[error(
        "slit opening spans only {samples_across:.2} grid samples (need >= {required:.0}); \
         refine the grid"
    )]
    SlitUnderResolved { samples_across: f64, required: f64 },

    /// Region-of-interest placement or size problem.
    #[error("region error: {0}")]
    Region(String),

    /// Structurally valid input with no extractable signal.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Malformed file content; `offset` is the byte position where the
    /// problem was detected.
    #[error("format error at byte {offset}: {reason}")]
    Format { offset: u64, reason: String },

    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Shorthand for a `Domain` error.
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Shorthand for a `Degenerate` error.
    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }
}

/// Validate that `value` is finite and strictly positive.
pub(crate) fn ensure_positive(value: f64, name: &str) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::domain(format!("{name} must be finite and > 0, got {value}")))
    }
}

/// Validate that `value` is finite and non-negative.
pub(crate) fn ensure_non_negative(value: f64, name: &str) -> Result<f64> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(Error::domain(format!("{name} must be finite and >= 0, got {value}")))
    }
}

/// Validate that `value` is finite.
pub(crate) fn ensure_finite(value: f64, name: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::domain(format!("{name} must be finite, got {value}")))
    }
}
