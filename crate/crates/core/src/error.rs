use thiserror::Error;

/// Failures raised by the algebra, the flow and the dense kernels.
///
/// Resonances are not errors: they are reported as data through
/// [`crate::flow::ResonanceEvent`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("chain length mismatch: {0} vs {1}")]
    ChainLengthMismatch(usize, usize),
    #[error("chain length {0} outside supported range 1..=63")]
    ChainLength(usize),
    #[error("operator is not diagonal (active set {0:#b})")]
    NonDiagonal(u64),
    #[error("operator is not hermitian (deviation {0:e})")]
    NonHermitian(f64),
    #[error("matrix has wrong shape: expected {expected}x{expected}, got {rows}x{cols}")]
    Shape { expected: usize, rows: usize, cols: usize },
    #[error("dense dimension {dim} exceeds budget {budget}")]
    BudgetExceeded { dim: usize, budget: usize },
    #[error("commutator series did not converge within {0} terms")]
    SeriesDiverged(usize),
    #[error("reduced order undefined: {0}")]
    IneligibleReducedOrder(&'static str),
    #[error("central diagram of a triad must be off-diagonal")]
    DiagonalCentral,
    #[error("not a density operator: {0}")]
    InvalidDensity(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("eigen-solver failed: {0}")]
    Eigen(String),
}

pub type Result<T> = std::result::Result<T, Error>;
