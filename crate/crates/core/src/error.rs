use thiserror::Error;

/// Errors raised across the library. The CLI maps these onto exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("quadrature dimension {dims} exceeds the oracle cap of {cap}")]
    DimensionCap { dims: usize, cap: usize },

    #[error("non-finite value produced at step {step}")]
    NonFinite { step: usize },

    #[error("missing derivative data: {0}")]
    MissingDerivative(String),

    #[error("degenerate Malliavin covariance (det = {det:e}) on an unlocalized sample")]
    Degenerate { det: f64 },

    #[error("infeasible configuration: {0}")]
    Infeasible(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("worker panicked on path {index}: {message}")]
    WorkerPanic { index: u64, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code: 2 for configuration errors, 3 for infeasible or
    /// unsupported combinations, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter { .. } | Error::ShapeMismatch(_) | Error::Config(_) | Error::Json(_) => 2,
            Error::Infeasible(_) | Error::Unsupported(_) | Error::DimensionCap { .. } => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
