use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("rank hint {hint} exceeds the numerical rank {numerical}")]
    InconsistentRank { hint: usize, numerical: usize },

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("matrix is not Hermitian (anti-Hermitian defect {defect:e})")]
    NotHermitian { defect: f64 },

    #[error("invalid boundary matrices: {0}")]
    InvalidBoundary(String),

    #[error("boundary matrix A is singular; the Robin form (I, B A^-1) needs an invertible A")]
    SingularA,

    #[error("non-finite values while propagating at k = {k}")]
    NonFinite { k: String },

    #[error("transformation instability: {0}")]
    TransformationInstability(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
