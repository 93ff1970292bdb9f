use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("contamination fraction {0} outside (0, 1/3)")]
    EpsOutOfRange(f64),

    #[error("constraint violated: {0}")]
    ConstraintViolated(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("invalid weight vector: {0}")]
    InvalidWeights(String),

    #[error("rho = {0} outside (0, 1]")]
    RhoOutOfRange(f64),

    #[error("packing mass {mass} below required {required}")]
    InsufficientMass { mass: f64, required: f64 },

    #[error("input violates feasibility by {violation:e}: {what}")]
    InfeasibleInput { what: String, violation: f64 },

    #[error("covering trace budget exceeded: tr(M') + |y'|_1 = {0}")]
    TraceBudgetExceeded(f64),

    #[error("covering matrix is numerically zero (trace {0:e})")]
    ZeroMatrix(f64),

    #[error("rho search exhausted after {steps} steps; last bracket [{lo}, {hi}]")]
    SearchExhausted { steps: usize, lo: f64, hi: f64 },

    #[error("solver budget of {0} iterations exhausted before reaching tolerance")]
    BudgetExhausted(usize),

    #[error("solver output failed verification: {0}")]
    VerificationFailed(String),

    #[error("power method did not converge after {0} iterations")]
    NoConvergence(usize),

    #[error("instance too large for the reference solver: {0}")]
    SizeLimitExceeded(String),

    #[error("candidate guesses could not be separated: {plus} vs {minus}")]
    Ambiguous { plus: f64, minus: f64 },

    #[error("dataset format error at byte {offset}: {reason}")]
    Format { offset: u64, reason: String },

    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, err: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            message: err.to_string(),
        }
    }

    /// Whether the caller may retry the failed step with a fresh seed.
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            Error::BudgetExhausted(_) | Error::NoConvergence(_) | Error::Ambiguous { .. }
        )
    }
}
