use thiserror::Error;

/// Errors raised by validation, solving, generation and sampling.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix {index} is not Hermitian (‖M − M†‖_F = {deviation:.3e})")]
    NotHermitian { index: usize, deviation: f64 },

    #[error("matrix {index} is not idempotent (‖P² − P‖_F = {deviation:.3e})")]
    NotIdempotent { index: usize, deviation: f64 },

    #[error("projector {index} does not have rank 1 (trace {trace:.6})")]
    NotRankOne { index: usize, trace: f64 },

    #[error("projectors {i} and {j} are not orthogonal (‖P_i P_j‖_F = {overlap:.3e})")]
    NotOrthogonal { i: usize, j: usize, overlap: f64 },

    #[error("projectors do not sum to the identity (‖ΣP − I‖_F = {deviation:.3e})")]
    NotComplete { deviation: f64 },

    #[error("dimension mismatch at item {index}: expected {expected}, found {found}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },

    #[error("invalid probability vector: {0}")]
    InvalidProbabilities(String),

    #[error("trace is {trace:.12}, expected 1")]
    TraceNotOne { trace: f64 },

    #[error("minimum eigenvalue {min_eigenvalue:.3e} is below −tol_psd")]
    NotPositive { min_eigenvalue: f64 },

    #[error("matrix is not an orthogonal projection: {0}")]
    NotAProjector(String),

    #[error("input contains NaN or infinite entries")]
    NonFiniteInput,

    #[error("dimension {n} is below the minimum {min}")]
    DimensionTooSmall { n: usize, min: usize },

    #[error("assignment set is empty")]
    EmptyFamily,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("construction failed: {0}")]
    ConstructionFailed(String),

    #[error("missing measurement record for basis {0}")]
    MissingRecord(String),

    #[error("secret lattice leaves the PSD cone: {0}")]
    LatticeLeavesPsdCone(String),

    #[error("schema error: {0}")]
    Schema(String),
}

pub type Result<T> = std::result::Result<T, Error>;
