//! Crate-wide error type.

/// Errors reported by grid construction, group/dual builders and transforms.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A chart point violates the chart domain (wrong dimension, `a <= 0`, NaN...).
    #[error("invalid group point: {0}")]
    InvalidPoint(String),
    /// A group or dual specification is outside the supported family.
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    /// An axis or grid description is unusable (empty, non-finite, wrong scale).
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    /// Two operands were built over different grids.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    /// Ill-conditioned or empty data where a calibration/solve was requested.
    #[error("degenerate input: {0}")]
    Degenerate(String),
    /// Operation not defined for the given group (e.g. Weyl map off euclidean).
    #[error("unsupported operation: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
