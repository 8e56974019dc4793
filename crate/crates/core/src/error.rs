use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid site dimension {0}; need d >= 2")]
    InvalidDimension(usize),

    #[error("model validation failed: {0}")]
    InvalidModel(String),

    #[error("internal consistency: {what} has imaginary residue {residue:.3e}")]
    Consistency { what: &'static str, residue: f64 },

    #[error("step size underflow after t = {t}")]
    Stiffness { t: f64 },

    #[error("dimension {dim} exceeds configured cap {cap}")]
    Capacity { dim: usize, cap: usize },

    #[error("time {t} outside admissible range [{lo}, {hi}]")]
    OutOfRange { t: f64, lo: f64, hi: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("ambiguous rank: singular value {value:.3e} within a factor 10 of tolerance {tol:.3e}")]
    RankAmbiguity { value: f64, tol: f64 },

    #[error("singular symplectic block: smallest singular value {0:.3e}")]
    SingularBlock(f64),

    #[error("need at least 3 values of N, got {0}")]
    InsufficientData(usize),

    #[error("flow integration: quadrature discrepancy {0:.3e}")]
    FlowIntegration(f64),

    #[error("complete positivity violated: minimum eigenvalue {0:.3e}")]
    CpViolation(f64),

    #[error("generator assembly: {which} defect {defect:.3e}")]
    Assembly { which: String, defect: f64 },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
