//! Error type shared by every module in the crate.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong while assembling, factoring, solving or
/// verifying a system.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Operand shapes do not line up (matrix/vector or block dimensions).
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A direct factorization hit a non-positive pivot on a matrix that was
    /// expected to be symmetric positive definite.
    #[error("matrix is not positive definite: pivot {index} is {value:.3e}")]
    NotPositiveDefinite { index: usize, value: f64 },

    /// Incomplete factorization still broke down after the maximum number of
    /// diagonal-shift retries.
    #[error("incomplete factorization breakdown persists after {retries} shifted retries (last shift {shift:.3e})")]
    FactorizationBreakdown { retries: usize, shift: f64 },

    /// Grid refinement level outside the supported range for the requested
    /// operation.
    #[error("refinement level {level} outside supported range {min}..={max}")]
    LevelOutOfRange { level: u32, min: u32, max: u32 },

    /// An invalid run configuration (bad pairing, bad parameter value, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// A numeric verification check did not hold.
    #[error("verification failed: {0}")]
    Verification(String),

    /// Malformed input file (Matrix Market or CSV).
    #[error("parse error: {0}")]
    Parse(String),

    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
