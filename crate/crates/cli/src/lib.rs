//! Command-line front end for tastekit: training, scoring and shift
//! experiments with JSON configs and CSV/JSON reports.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
//! failure. Errors print as a single `error: <class>: <message>` line.

pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod specs;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use tastekit::detector::ResidualMode;
use tastekit::stein_core::LaplacianRoute;

use config::{load_json, ExperimentConfig, ExperimentKind, ScoreCommandConfig, TrainPredictorConfig, TrainScoreConfig};
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "tastekit", version, about = "Task-aware shift diagnostics with the Langevin Stein operator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args, Default, Clone)]
pub struct CommonArgs {
    /// JSON config file (see effective-config.json from any run).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Named preset used as the base config.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// exact | shortcut[:K] | hutchinson:K | omit
    #[arg(long, global = true)]
    pub route: Option<String>,
    #[arg(long, global = true)]
    pub per_dimension: bool,
    #[arg(long, global = true)]
    pub no_baseline: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a regression predictor; writes predictor.json and loss.csv.
    TrainPredictor,
    /// Train a denoising score-matching model; writes score.json and loss.csv.
    TrainScore,
    /// Adjusted residuals for a CSV of test points.
    Score(ScoreArgs),
    /// Run a shift experiment and write its report bundle.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Headered CSV of test points (optional `label` column).
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Headered CSV of in-distribution calibration points.
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    /// Predictor preset or checkpoint path.
    #[arg(long)]
    pub predictor: Option<String>,
    /// Score preset or score JSON path.
    #[arg(long)]
    pub score: Option<String>,
    /// absolute | signed-upper | signed-lower
    #[arg(long)]
    pub mode: Option<String>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// rotate | tilt | mixed | blindspot | identities
    #[arg(long)]
    pub kind: Option<String>,
}

fn reject(flag: &str, set: bool, command: &str) -> CliResult<()> {
    if set {
        return Err(CliError::Config(format!("--{flag} does not apply to {command}")));
    }
    Ok(())
}

fn parse_route(s: &str) -> CliResult<LaplacianRoute> {
    s.parse().map_err(|e: tastekit::Error| CliError::Config(e.to_string()))
}

fn parse_mode(s: &str) -> CliResult<ResidualMode> {
    serde_json::from_value(serde_json::Value::String(s.into()))
        .map_err(|_| CliError::Config(format!("unknown mode '{s}' (known: absolute, signed-upper, signed-lower)")))
}

fn base_config<T: serde::de::DeserializeOwned>(
    c: &CommonArgs,
    preset: impl Fn(&str) -> CliResult<T>,
    default: &str,
) -> CliResult<T> {
    match (&c.config, &c.preset) {
        (Some(_), Some(_)) => Err(CliError::Config("pass either --config or --preset, not both".into())),
        (Some(path), None) => load_json(path),
        (None, Some(name)) => preset(name),
        (None, None) => preset(default),
    }
}

fn out_dir(c: &CommonArgs, fallback: Option<&Path>) -> CliResult<PathBuf> {
    let dir = c.out.clone().or_else(|| fallback.map(Path::to_path_buf)).unwrap_or_else(|| PathBuf::from("out"));
    data::ensure_dir(&dir)?;
    Ok(dir)
}

pub fn run(cli: Cli) -> CliResult<()> {
    let c = &cli.common;
    match &cli.command {
        Command::TrainPredictor => {
            for (flag, set) in [("alpha", c.alpha.is_some()), ("route", c.route.is_some()), ("per-dimension", c.per_dimension), ("no-baseline", c.no_baseline)] {
                reject(flag, set, "train-predictor")?;
            }
            let mut cfg: TrainPredictorConfig = base_config(c, TrainPredictorConfig::preset, "linear-task-2d")?;
            cfg.seed = c.seed.unwrap_or(cfg.seed);
            cfg.samples = c.samples.unwrap_or(cfg.samples);
            commands::train::train_predictor(&cfg, &out_dir(c, None)?)
        }
        Command::TrainScore => {
            for (flag, set) in [("alpha", c.alpha.is_some()), ("route", c.route.is_some()), ("per-dimension", c.per_dimension), ("no-baseline", c.no_baseline)] {
                reject(flag, set, "train-score")?;
            }
            let mut cfg: TrainScoreConfig = base_config(c, TrainScoreConfig::preset, "dsm-gauss2d")?;
            cfg.seed = c.seed.unwrap_or(cfg.seed);
            cfg.samples = c.samples.unwrap_or(cfg.samples);
            commands::train::train_score(&cfg, &out_dir(c, None)?)
        }
        Command::Score(a) => {
            reject("samples", c.samples.is_some(), "score")?;
            reject("preset", c.preset.is_some(), "score")?;
            let mut cfg: ScoreCommandConfig = match &c.config {
                Some(path) => load_json(path)?,
                None => ScoreCommandConfig {
                    seed: 0,
                    test: a.test.clone().ok_or_else(|| CliError::Config("score needs --test or --config".into()))?,
                    calibration: None,
                    predictor: "difference-task".into(),
                    score: "standard-gaussian".into(),
                    route: LaplacianRoute::Exact,
                    compute_baseline: true,
                    per_dimension: false,
                    alpha: None,
                    mode: ResidualMode::Absolute,
                },
            };
            if let Some(t) = &a.test {
                cfg.test = t.clone();
            }
            if let Some(v) = &a.calibration {
                cfg.calibration = Some(v.clone());
            }
            if let Some(v) = &a.predictor {
                cfg.predictor = v.clone();
            }
            if let Some(v) = &a.score {
                cfg.score = v.clone();
            }
            if let Some(v) = &a.mode {
                cfg.mode = parse_mode(v)?;
            }
            if let Some(r) = &c.route {
                cfg.route = parse_route(r)?;
            }
            cfg.seed = c.seed.unwrap_or(cfg.seed);
            cfg.alpha = c.alpha.or(cfg.alpha);
            cfg.per_dimension |= c.per_dimension;
            cfg.compute_baseline &= !c.no_baseline;
            commands::score::score(&cfg, &out_dir(c, None)?)
        }
        Command::Experiment(a) => {
            reject("per-dimension", c.per_dimension, "experiment")?;
            reject("no-baseline", c.no_baseline, "experiment")?;
            let kind: Option<ExperimentKind> = a.kind.as_deref().map(str::parse).transpose()?;
            let mut cfg: ExperimentConfig = match (&c.config, &c.preset, kind) {
                (None, None, Some(k)) => ExperimentConfig::for_kind(k),
                (None, None, None) => return Err(CliError::Config("experiment needs --kind, --preset or --config".into())),
                _ => base_config(c, ExperimentConfig::preset, "")?,
            };
            if let Some(k) = kind {
                if k != cfg.kind {
                    return Err(CliError::Config(format!("--kind {k:?} conflicts with config kind {:?}", cfg.kind)));
                }
            }
            cfg.seed = c.seed.unwrap_or(cfg.seed);
            cfg.samples = c.samples.unwrap_or(cfg.samples);
            cfg.alpha = c.alpha.unwrap_or(cfg.alpha);
            if let Some(r) = &c.route {
                cfg.route = parse_route(r)?;
            }
            let out = out_dir(c, cfg.out.clone().as_deref())?;
            commands::experiment::experiment(&cfg, &out)
        }
    }
}

/// Applies `TASTEKIT_THREADS` to the global worker pool.
pub fn configure_threads() -> CliResult<()> {
    if let Ok(v) = std::env::var("TASTEKIT_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|n| *n >= 1)
            .ok_or_else(|| CliError::Config(format!("TASTEKIT_THREADS must be a positive integer, got '{v}'")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}
