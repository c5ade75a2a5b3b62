use alloc::string::String;

/// Errors raised by the teaching engine.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("learning rate must be positive, got {0}")]
    InvalidLearningRate(f64),

    #[error("memory decay rate must lie in [0, 1), got {0}")]
    InvalidBeta(f64),

    #[error("teaching pool is empty")]
    EmptyPool,

    #[error("invalid teaching pool: {0}")]
    InvalidPool(String),

    #[error("teaching history is empty")]
    EmptyHistory,

    #[error("bandwidth must be positive in every dimension (dimension {0})")]
    InvalidBandwidth(usize),

    #[error("ill-conditioned affinity graph: {0}")]
    SingularSystem(String),

    #[error("no harmonic estimate for pool index {0}")]
    MissingEstimate(usize),

    #[error("degenerate direction: {0}")]
    DegenerateDirection(&'static str),

    #[error("covariance matrix is not symmetric positive definite")]
    InvalidCovariance,

    #[error("target concept training did not converge (gradient norm {grad_norm:e})")]
    NonConvergence { grad_norm: f64 },

    #[error("malformed sorting trial: {0}")]
    InvalidTrial(String),

    #[error("expected exactly 3 calibration scores, got {0}")]
    TrialCount(usize),

    #[error("mean memory length {0} is outside [2, 9]")]
    MemoryOutOfRange(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
