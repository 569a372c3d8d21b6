//! Command configurations and their presets.
//!
//! Every config is plain JSON. Commands write the fully resolved config as
//! `effective-config.json`; feeding it back through `--config` reproduces
//! the same outputs.

use std::f64::consts::FRAC_1_SQRT_2;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tastekit::detector::ResidualMode;
use tastekit::predictors::{Activation, Optimizer, OptimizerConfig};
use tastekit::score_models::ScoreModel;
use tastekit::stein_core::LaplacianRoute;

use crate::error::{CliError, CliResult};

pub fn load_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainPredictorConfig {
    pub seed: u64,
    /// Training points drawn from N(0, I₂) with target `y = x₂ − x₁`,
    /// unless `data` is given.
    pub samples: usize,
    pub test_samples: usize,
    /// Headered CSV with feature columns and a `y` target column.
    #[serde(default)]
    pub data: Option<PathBuf>,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: Optimizer,
}

impl TrainPredictorConfig {
    /// One hidden ReLU layer of width 64, lr 1e-3, 100 epochs.
    pub fn linear_task_2d() -> Self {
        TrainPredictorConfig {
            seed: 0,
            samples: 10_000,
            test_samples: 2_000,
            data: None,
            hidden: vec![64],
            activation: Activation::Relu,
            learning_rate: 1e-3,
            epochs: 100,
            batch_size: 64,
            optimizer: Optimizer::adam(),
        }
    }

    pub fn preset(name: &str) -> CliResult<Self> {
        match name {
            "linear-task-2d" => Ok(Self::linear_task_2d()),
            _ => Err(CliError::Config(format!("unknown predictor preset '{name}' (known: linear-task-2d)"))),
        }
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            optimizer: self.optimizer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainScoreConfig {
    pub seed: u64,
    pub samples: usize,
    /// Training distribution; must have an exact sampler.
    pub distribution: ScoreModel,
    pub noise_std: f64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: Optimizer,
    /// Draws used to estimate the Fisher divergence to the exact score.
    pub fisher_samples: usize,
}

impl TrainScoreConfig {
    pub fn dsm_gauss2d() -> Self {
        TrainScoreConfig {
            seed: 2024,
            samples: 10_000,
            distribution: ScoreModel::standard_gaussian(2),
            noise_std: 0.1,
            hidden: vec![64, 64],
            activation: Activation::Tanh,
            learning_rate: 1e-3,
            epochs: 10,
            batch_size: 256,
            optimizer: Optimizer::adam(),
            fisher_samples: 20_000,
        }
    }

    pub fn preset(name: &str) -> CliResult<Self> {
        match name {
            "dsm-gauss2d" => Ok(Self::dsm_gauss2d()),
            _ => Err(CliError::Config(format!("unknown score preset '{name}' (known: dsm-gauss2d)"))),
        }
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            optimizer: self.optimizer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreCommandConfig {
    pub seed: u64,
    pub test: PathBuf,
    #[serde(default)]
    pub calibration: Option<PathBuf>,
    /// Predictor preset name or checkpoint path.
    pub predictor: String,
    /// Score preset name or score-model JSON path.
    pub score: String,
    pub route: LaplacianRoute,
    pub compute_baseline: bool,
    pub per_dimension: bool,
    #[serde(default)]
    pub alpha: Option<f64>,
    pub mode: ResidualMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Rotate,
    Tilt,
    Mixed,
    Blindspot,
    Identities,
}

impl std::str::FromStr for ExperimentKind {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| CliError::Config(format!("unknown experiment kind '{s}' (known: rotate, tilt, mixed, blindspot, identities)")))
    }
}

/// Shift-family parameters; each kind reads the fields it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShiftParams {
    /// Shift magnitude for the rotation and blind-spot families.
    pub epsilon: f64,
    pub direction: Vec<f64>,
    /// Angles `2πk / angle_steps`, `k = 0 … angle_steps − 1`.
    pub angle_steps: usize,
    /// Projection direction of the first-order operator.
    pub projection: Vec<f64>,
    /// Linear tilt coefficients, one slope check each.
    pub tilt_directions: Vec<Vec<f64>>,
    pub epsilon_grid: Vec<f64>,
    pub variance_epsilon: f64,
    pub corruption_grid: Vec<f64>,
    /// Out-distribution mean is `out_shift · (1, −1)/√2`.
    pub out_shift: f64,
    /// Magnitudes for the power-versus-shift table.
    pub shift_magnitudes: Vec<f64>,
    /// Corruption level used for the power-versus-shift table and histograms.
    pub shift_corruption: f64,
    pub calibration_samples: usize,
    pub histogram_bins: usize,
}

impl Default for ShiftParams {
    fn default() -> Self {
        ShiftParams {
            epsilon: 10.0,
            direction: vec![FRAC_1_SQRT_2, FRAC_1_SQRT_2],
            angle_steps: 16,
            projection: vec![1.0, 1.0],
            tilt_directions: vec![vec![1.0, 0.0], vec![1.0, 1.0]],
            epsilon_grid: tastekit::shift_lab::DEFAULT_EPSILON_GRID.to_vec(),
            variance_epsilon: 0.05,
            corruption_grid: vec![0.0, 0.1, 0.2, 0.5, 1.0],
            out_shift: 4.0,
            shift_magnitudes: vec![1.0, 2.0, 4.0, 8.0],
            shift_corruption: 0.5,
            calibration_samples: 10_000,
            histogram_bins: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    /// Draws per grid point (per mixture for the mixed kind).
    pub samples: usize,
    pub predictor: String,
    pub score: String,
    #[serde(default)]
    pub shift: ShiftParams,
    pub alpha: f64,
    pub route: LaplacianRoute,
    pub mode: ResidualMode,
    /// Output directory; not part of the emitted config.
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
}

pub const EXPERIMENT_PRESETS: [&str; 6] = ["rotate", "rotate-trained", "tilt", "mixed", "blindspot", "identities"];

impl ExperimentConfig {
    fn base(kind: ExperimentKind, samples: usize) -> Self {
        ExperimentConfig {
            kind,
            seed: 1,
            samples,
            predictor: "difference-task".into(),
            score: "standard-gaussian".into(),
            shift: ShiftParams::default(),
            alpha: 0.05,
            route: LaplacianRoute::Exact,
            mode: ResidualMode::Absolute,
            out: None,
        }
    }

    pub fn preset(name: &str) -> CliResult<Self> {
        use ExperimentKind::*;
        Ok(match name {
            "rotate" => Self::base(Rotate, 10_000),
            "rotate-trained" => ExperimentConfig { predictor: "linear-task-2d".into(), ..Self::base(Rotate, 10_000) },
            "tilt" => Self::base(Tilt, 100_000),
            "mixed" => Self::base(Mixed, 500),
            "blindspot" => Self::base(Blindspot, 20_000),
            "identities" => Self::base(Identities, 20_000),
            _ => {
                return Err(CliError::Config(format!(
                    "unknown experiment preset '{name}' (known: {})",
                    EXPERIMENT_PRESETS.join(", ")
                )))
            }
        })
    }

    pub fn for_kind(kind: ExperimentKind) -> Self {
        let name = serde_json::to_value(kind).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
        Self::preset(&name).expect("every kind has a preset")
    }
}
