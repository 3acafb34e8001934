use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Smallest eigenvalue of a matrix that was required to be positive
    /// semidefinite fell below the tolerance.
    #[error("matrix is not positive semidefinite (smallest eigenvalue {min_eig:e}, tolerance {tol:e})")]
    NotPsd { min_eig: f64, tol: f64 },

    #[error("block vector is rank deficient (numerical rank {rank} of {s})")]
    RankDeficient { rank: usize, s: usize },

    /// The candidate block at Arnoldi step `step` lost rank, so
    /// `H[step, step-1]` is singular and `V[step]` cannot be formed.
    #[error("block Arnoldi breakdown at step {step} (candidate rank {rank} of {s})")]
    Breakdown { step: usize, rank: usize, s: usize },

    #[error("singular pivot block in block Givens transformation")]
    SingularPivot,

    #[error("inconsistent prescription at step {k}: {reason}")]
    InconsistentPrescription { k: usize, reason: String },

    #[error("numerically ill-conditioned construction: cond({what}) = {cond:e} exceeds {limit:e}")]
    IllConditioned { what: String, cond: f64, limit: f64 },

    #[error("invalid input: {0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
}
