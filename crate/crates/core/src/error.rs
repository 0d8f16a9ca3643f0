use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("Jacobi eigensolver did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("trace bound is negative ({0:e}); the projector is probably broken")]
    NegativeTrace(f64),

    #[error("generalized eigenvalue {value:e} is below the PSD tolerance {tol:e}")]
    NegativeEigenvalue { value: f64, tol: f64 },

    #[error("rank {rank} is out of range for dimension {dim}")]
    RankOutOfRange { rank: usize, dim: usize },

    #[error("projector is not flagged Σ⁻¹-orthogonal")]
    NotSigmaOrthogonal,

    #[error("closed form requires the standard normal measure N(0, I)")]
    NonStandardMeasure,

    #[error("coordinate index {index} is out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("model evaluation failed at sample {sample}: {source}")]
    ModelEvaluationFailure {
        sample: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("Sobol' estimation requires a diagonal covariance (independent inputs)")]
    NonDiagonalCovariance,

    #[error("total variance is zero; sensitivity indices are undefined")]
    ZeroVariance,

    #[error("linear solver failed (relative residual {residual:e})")]
    SolverFailure { residual: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dims(context: &'static str, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            found,
        }
    }
}
