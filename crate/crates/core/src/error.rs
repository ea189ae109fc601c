use thiserror::Error;

/// Errors raised by the discretization, solvers and experiment pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("singular pivot {pivot:e} in row {row} of tridiagonal solve")]
    SingularPivot { row: usize, pivot: f64 },

    #[error("degenerate coefficient: min(slowness - 2 kappa u) = {min_coeff:e} below threshold {threshold:e}")]
    Degenerate { min_coeff: f64, threshold: f64 },

    #[error("time step {step} failed: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("cholesky factorization failed for the regularized normal system")]
    CholeskyFailed,

    #[error("SVD did not converge within {sweeps} sweeps")]
    NonConvergence { sweeps: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("location {0} is not a mesh node")]
    NotANode(f64),

    #[error("signal not decayed at the horizon: |psi(T)| = {0:e}")]
    NotDecayed(f64),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the error stems from user configuration rather than the numerics.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::InvalidInput(_) | Error::Json(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
