use thiserror::Error;

use crate::maxent::MaxEntSolution;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed row {row}: {message}")]
    MalformedRow { row: usize, message: String },

    #[error("empty table")]
    EmptyTable,

    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("column `{0}` cannot be read as numeric")]
    NonNumericColumn(String),

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported polynomial degree {0}; only degree 2 is available")]
    UnsupportedDegree(u32),

    #[error("coordinate {0} is claimed by more than one block")]
    OverlappingBlocks(usize),

    #[error("duplicate term {0}")]
    DuplicateTerm(String),

    #[error("coordinate {coord} = {value} lies outside the unit cube")]
    OutOfCube { coord: usize, value: f64 },

    #[error("exponential overflow (exponent {0:.1}); reduce the step or clip theta")]
    Overflow(f64),

    #[error("solver diverged: |theta|_inf reached {norm:.3e}; the constraints are likely infeasible")]
    Diverged { norm: f64 },

    #[error(
        "solver stopped without converging after {} iterations (max residual {:.3e}, partition {:.4})",
        .0.iterations, .0.residual_max(), .0.partition_estimate
    )]
    NotConverged(Box<MaxEntSolution>),

    #[error("mutual information must be non-negative, got {0}")]
    NegativeMutualInformation(f64),

    #[error("variance must be positive and finite, got {0}")]
    InvalidVariance(f64),

    #[error("duplicate points leave a zero neighbour distance at row {0}; add jitter")]
    DuplicatePoints(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors raised by the maximum-entropy solver rather than by the input data.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::NotConverged(_) | Error::Diverged { .. } | Error::Overflow(_)
        )
    }
}
