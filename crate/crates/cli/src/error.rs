use thiserror::Error;

/// Failure classes, each with its own process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("numerical: {0}")]
    Numerical(String),
    #[error("io: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) | CliError::Io(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    /// Single-line rendering for stderr.
    pub fn line(&self) -> String {
        format!("error: {self}").replace('\n', " ")
    }
}

impl From<tastekit::Error> for CliError {
    fn from(e: tastekit::Error) -> Self {
        use tastekit::Error as E;
        let msg = e.to_string();
        match e {
            E::InvalidArgument(_)
            | E::InvalidLevel(_)
            | E::RouteConflict(_)
            | E::MissingCalibration
            | E::UseHutchinson { .. }
            | E::ShortcutRequiresPiecewiseAffine
            | E::NotSamplable(_)
            | E::DensityUnavailable(_) => CliError::Config(msg),
            E::DimensionMismatch { .. } | E::LengthMismatch { .. } | E::InsufficientSamples { .. } | E::Serialization(_) => {
                CliError::Data(msg)
            }
            E::NonFinite | E::TrainingDiverged { .. } | E::LowEffectiveSampleSize { .. } => CliError::Numerical(msg),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
