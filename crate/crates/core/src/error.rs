use thiserror::Error;

/// Errors surfaced by the precoding library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PrecodeError {
    /// A triangular or linear system has a pivot below the singularity tolerance.
    #[error("singular matrix: pivot {index} has magnitude {magnitude:e}")]
    SingularMatrix { index: usize, magnitude: f64 },

    #[error("matrix is not Hermitian (asymmetry {asymmetry:e})")]
    NotHermitian { asymmetry: f64 },

    /// The instance has no information to precode (zero data vector, zero
    /// precoding factor, or no feasible leaf).
    #[error("degenerate instance: {0}")]
    DegenerateInstance(String),

    /// Re{x^H z} vanished, so the fractional objective is undefined.
    #[error("zero correlation between candidate and MRT vector")]
    ZeroCorrelation,

    #[error("instance too large for exhaustive search: B = {antennas} exceeds {max}")]
    InstanceTooLarge { antennas: usize, max: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, PrecodeError>;
