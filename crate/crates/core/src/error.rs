use thiserror::Error;

/// Errors raised by the simulation engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("basis mismatch between operands")]
    BasisMismatch,

    #[error("matrix is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },

    #[error("step budget of {0} exhausted")]
    StepBudget(usize),

    #[error("trace drifted to {trace} during integration")]
    TraceDrift { trace: f64 },

    #[error("density matrix lost positivity (eigenvalue {0:.3e})")]
    Positivity(f64),

    #[error("split step dt = {dt} too large (splitting error estimate {estimate:.3e})")]
    SplitStepTooLarge { dt: f64, estimate: f64 },

    #[error("numerical failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
