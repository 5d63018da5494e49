use thiserror::Error;

use crate::quadrature::QuadError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parameter {theta:?} outside the domain of {family}")]
    ParameterOutOfDomain { family: &'static str, theta: Vec<f64> },

    #[error("point {x} outside the support of {family}")]
    OutsideSupport { family: &'static str, x: f64 },

    #[error("parameter index {index} out of range (dimension {dim})")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("unknown kernel parameter index {0}")]
    UnknownKernelParameter(usize),

    #[error("{0} is not available for this model")]
    Unsupported(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("finite-difference step failed: {0}")]
    StepFailure(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("SVD did not converge")]
    SvdFailure,

    #[error("point is not on the stratum (residual {residual:e})")]
    NotOnStratum { residual: f64 },

    #[error("stratum level map is rank deficient at this point (rank {rank} < codim {codim})")]
    DegenerateStratum { rank: usize, codim: usize },

    #[error(transparent)]
    Quadrature(#[from] QuadError),
}
