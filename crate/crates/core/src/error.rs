use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("insufficient samples: need at least {required}, got {got}")]
    InsufficientSamples { required: usize, got: usize },
    #[error("non-finite input")]
    NonFinite,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("level {0} outside (0, 1)")]
    InvalidLevel(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize },
    #[error("density unavailable for {0}")]
    DensityUnavailable(String),
    #[error("input dimension {dim} exceeds exact-Hessian bound {max}; use hutchinson route")]
    UseHutchinson { dim: usize, max: usize },
    #[error("shortcut requires piecewise-affine backbone")]
    ShortcutRequiresPiecewiseAffine,
    #[error("route conflict: {0}")]
    RouteConflict(String),
    #[error("compute_D requested without a calibration set")]
    MissingCalibration,
    #[error("distribution is not samplable: {0}")]
    NotSamplable(String),
    #[error("effective sample size {ess:.1} below required {required:.1}")]
    LowEffectiveSampleSize { ess: f64, required: f64 },
    #[error("serialization: {0}")]
    Serialization(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}
