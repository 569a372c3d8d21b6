//! `train-predictor` and `train-score`.

use std::path::Path;

use serde::Serialize;
use tastekit::numkit::{mean_and_stderr, MeanStderr, Rng};
use tastekit::predictors::{
    dataset_loss, train, Dataset, Head, LossKind, Mlp, MlpPredictor, PredictorCheckpoint, TrainConfig,
};
use tastekit::score_models::{fisher_divergence, train_dsm_score, DsmNetConfig, SamplableDistribution, ScoreModel};

use crate::config::{TrainPredictorConfig, TrainScoreConfig};
use crate::data::{read_points, write_json, write_rows};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Serialize)]
pub struct PredictorSummary {
    pub final_train_loss: f64,
    /// Mean squared error on fresh draws (synthetic task only).
    pub test_mse: Option<MeanStderr>,
    pub epochs: usize,
    pub samples: usize,
}

#[derive(Serialize)]
struct LossRow {
    epoch: usize,
    loss: f64,
}

fn difference_task_data(n: usize, rng: &mut Rng) -> Dataset {
    let xs = SamplableDistribution::standard_gaussian(2).sample(n, rng);
    let targets = xs.iter().map(|x| x[1] - x[0]).collect();
    Dataset { inputs: xs, targets }
}

/// Trains the configured regression network; deterministic in `cfg.seed`.
pub fn fit_predictor(cfg: &TrainPredictorConfig) -> CliResult<(MlpPredictor, Vec<f64>, PredictorSummary)> {
    cfg.optimizer_config().validate()?;
    let mut root = Rng::new(cfg.seed);
    let mut data_rng = root.fork();
    let mut init_rng = root.fork();
    let train_seed = root.fork_seed();
    let mut test_rng = root.fork();

    let (data, synthetic) = match &cfg.data {
        Some(path) => {
            let set = read_points(path)?;
            let targets = set
                .targets
                .ok_or_else(|| CliError::Data(format!("{}: no 'y' target column", path.display())))?;
            (Dataset { inputs: set.points, targets }, false)
        }
        None => {
            if cfg.samples < 1 {
                return Err(CliError::Config("samples must be at least 1".into()));
            }
            (difference_task_data(cfg.samples, &mut data_rng), true)
        }
    };
    let d = data.inputs[0].len();
    let mut sizes = vec![d];
    sizes.extend(&cfg.hidden);
    sizes.push(1);
    let net = Mlp::new(&sizes, cfg.activation, &mut init_rng)?;
    let model = MlpPredictor::new(net, Head::LinearScalar)?;
    let tc = TrainConfig {
        learning_rate: cfg.learning_rate,
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        optimizer: cfg.optimizer,
        loss: LossKind::Mse,
        seed: train_seed,
    };
    let out = train(&model, &data, &tc)?;
    let test_mse = if synthetic && cfg.test_samples >= 2 {
        let test = difference_task_data(cfg.test_samples, &mut test_rng);
        let errs: Vec<f64> = test
            .inputs
            .iter()
            .zip(&test.targets)
            .map(|(x, y)| Ok((out.model.net.forward(x)?[0] - y).powi(2)))
            .collect::<tastekit::Result<_>>()?;
        Some(mean_and_stderr(&errs)?)
    } else {
        None
    };
    let summary = PredictorSummary {
        final_train_loss: dataset_loss(&out.model, &data)?,
        test_mse,
        epochs: cfg.epochs,
        samples: data.len(),
    };
    Ok((out.model, out.loss_history, summary))
}

pub fn train_predictor(cfg: &TrainPredictorConfig, out: &Path) -> CliResult<()> {
    let (model, history, summary) = fit_predictor(cfg)?;
    let meta = serde_json::json!({ "config": cfg, "summary": summary });
    write_json(&out.join("predictor.json"), &PredictorCheckpoint::new(&model, Some(meta)))?;
    let rows: Vec<LossRow> = history.iter().enumerate().map(|(epoch, loss)| LossRow { epoch, loss: *loss }).collect();
    write_rows(&out.join("loss.csv"), &rows)?;
    write_json(&out.join("effective-config.json"), cfg)
}

/// Trains the configured DSM score network and records its Fisher divergence
/// to the exact score of the training distribution.
pub fn fit_score(cfg: &TrainScoreConfig) -> CliResult<ScoreModel> {
    if !(cfg.noise_std > 0.0 && cfg.noise_std.is_finite()) {
        return Err(CliError::Config(format!("noise_std must be positive, got {}", cfg.noise_std)));
    }
    let dist = SamplableDistribution::new(cfg.distribution.clone())?;
    let mut root = Rng::new(cfg.seed);
    let mut data_rng = root.fork();
    let mut train_rng = root.fork();
    let mut eval_rng = root.fork();
    let samples = dist.sample(cfg.samples, &mut data_rng);
    let net = DsmNetConfig { hidden: cfg.hidden.clone(), activation: cfg.activation };
    let mut model = train_dsm_score(&samples, &net, cfg.noise_std, &cfg.optimizer_config(), &mut train_rng)?;
    let j = fisher_divergence(&dist, &model, cfg.fisher_samples, &mut eval_rng)?;
    if let ScoreModel::Learned(l) = &mut model {
        l.training.fisher_divergence = Some(j);
    }
    Ok(model)
}

pub fn train_score(cfg: &TrainScoreConfig, out: &Path) -> CliResult<()> {
    let model = fit_score(cfg)?;
    if let ScoreModel::Learned(l) = &model {
        let rows: Vec<LossRow> =
            l.training.loss_history.iter().enumerate().map(|(epoch, loss)| LossRow { epoch, loss: *loss }).collect();
        write_rows(&out.join("loss.csv"), &rows)?;
    }
    write_json(&out.join("score.json"), &model)?;
    write_json(&out.join("effective-config.json"), cfg)
}
