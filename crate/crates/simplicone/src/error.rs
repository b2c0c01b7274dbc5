use thiserror::Error;

/// Crate-wide error type. Variants marked "input" describe bad data handed
/// to the library; the rest are numerical failures raised mid-computation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix has a non-finite entry")]
    NonFinite,

    #[error("matrix is numerically singular (sigma_min/sigma_max = {ratio:.3e}, tolerance {tol:.3e})")]
    SingularMatrix { ratio: f64, tol: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("known solution fails the fixed-point equation: residual {residual:.3e} exceeds {bound:.3e}")]
    InconsistentKnownSolution { residual: f64, bound: f64 },

    #[error("stop rule KnownSolution needs a problem with a known solution attached")]
    MissingKnownSolution,

    #[error("contraction factor {alpha} lies outside [0, 1)")]
    InvalidAlpha { alpha: f64 },

    #[error("Cholesky factorization of A^T A + I failed; the cone data is corrupted")]
    FactorizationFailure,

    #[error("Newton linear system is singular at iteration {iteration}")]
    LinearSolveFailure { iteration: usize },

    #[error("solver stopped without converging (status {status})")]
    DidNotConverge { status: &'static str },

    #[error("enumeration over 2^m sign patterns is limited to m <= {limit}, got m = {dim}")]
    DimensionTooLarge { dim: usize, limit: usize },

    #[error("no sign pattern yields an admissible solution")]
    NoPatternAccepted,

    #[error("random matrix has a zero largest singular value")]
    DegenerateSvd,

    #[error("no converged record for problem {problem_id}")]
    NoConvergedRecord { problem_id: String },

    #[error("empty record set")]
    EmptyRecords,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code the CLI maps this error to: 1 for usage, I/O and
    /// input validation, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFinite
            | Error::SingularMatrix { .. }
            | Error::DimensionMismatch { .. }
            | Error::MissingKnownSolution
            | Error::DimensionTooLarge { .. }
            | Error::EmptyRecords
            | Error::Io(_)
            | Error::Parse(_)
            | Error::Json(_) => 1,
            Error::InconsistentKnownSolution { .. }
            | Error::InvalidAlpha { .. }
            | Error::FactorizationFailure
            | Error::LinearSolveFailure { .. }
            | Error::DidNotConverge { .. }
            | Error::NoPatternAccepted
            | Error::DegenerateSvd
            | Error::NoConvergedRecord { .. } => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
