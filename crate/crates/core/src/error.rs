use thiserror::Error;

/// Library-wide error type. Variants are grouped by what went wrong rather
/// than by module: callers (in particular the CLI) map them onto exit codes.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violates a documented precondition (bad exponent, odd
    /// sample count, alpha out of range, ...).
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// Two objects that must share a grid do not.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// A sampled value or computed quantity is NaN/inf.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Spectral content sits where the construction cannot represent it
    /// (tail mass beyond the covered frequency region, band-support test
    /// failures, boundary decay violations).
    #[error("support guard: {0}")]
    SupportGuard(String),

    /// The frequency covering failed to cover the target region, or the
    /// partition denominator dropped below its floor.
    #[error("coverage failure: {0}")]
    Coverage(String),

    /// Automatic calibration of the covering radius factor did not converge.
    #[error("calibration failure: {0}")]
    Calibration(String),

    /// A computation was refused because it would exceed the documented
    /// cost ceiling (dense quadrature on too large a grid, oversized sweeps).
    #[error("cost guard: {0}")]
    CostGuard(String),

    /// A symbol vanished on a lattice point where a lower bound was required.
    #[error("symbol vanishes: {0}")]
    SymbolVanishes(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed field file or config text.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
