//! Resolution of predictor and score specs: a preset name or a JSON path.

use std::path::Path;

use tastekit::predictors::{Predictor, PredictorCheckpoint, QuadraticFunction};
use tastekit::score_models::ScoreModel;

use crate::commands::train::{fit_predictor, fit_score};
use crate::config::{load_json, TrainPredictorConfig, TrainScoreConfig};
use crate::error::{CliError, CliResult};

pub const PREDICTOR_PRESETS: [&str; 2] = ["difference-task", "linear-task-2d"];
pub const SCORE_PRESETS: [&str; 2] = ["standard-gaussian", "dsm-gauss2d"];

pub fn load_predictor(spec: &str) -> CliResult<Box<dyn Predictor>> {
    match spec {
        // exact task f(x) = x₂ − x₁
        "difference-task" => Ok(Box::new(QuadraticFunction::difference_task())),
        "linear-task-2d" => Ok(Box::new(fit_predictor(&TrainPredictorConfig::linear_task_2d())?.0)),
        path => {
            let path = Path::new(path);
            if !path.exists() {
                return Err(CliError::Config(format!(
                    "predictor '{}' is neither a preset ({}) nor an existing file",
                    path.display(),
                    PREDICTOR_PRESETS.join(", ")
                )));
            }
            let value: serde_json::Value = load_json(path)?;
            if value.get("layer_sizes").is_some() {
                let ck: PredictorCheckpoint = serde_json::from_value(value)
                    .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
                Ok(Box::new(ck.into_predictor()?))
            } else {
                let q: QuadraticFunction = serde_json::from_value(value)
                    .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
                Ok(Box::new(q))
            }
        }
    }
}

pub fn load_score(spec: &str) -> CliResult<ScoreModel> {
    match spec {
        "standard-gaussian" => Ok(ScoreModel::standard_gaussian(2)),
        "dsm-gauss2d" => fit_score(&TrainScoreConfig::dsm_gauss2d()),
        path => {
            let path = Path::new(path);
            if !path.exists() {
                return Err(CliError::Config(format!(
                    "score '{}' is neither a preset ({}) nor an existing file",
                    path.display(),
                    SCORE_PRESETS.join(", ")
                )));
            }
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
        }
    }
}
