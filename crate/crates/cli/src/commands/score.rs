//! `score`: adjusted residuals for a test file.

use std::path::Path;

use tastekit::detector::DetectionReport;
use tastekit::numkit::Rng;
use tastekit::stein_core::{batch_adjusted_residuals, BatchOptions};

use crate::config::ScoreCommandConfig;
use crate::data::{read_points, write_json, write_table};
use crate::error::{CliError, CliResult};
use crate::specs::{load_predictor, load_score};

pub fn score(cfg: &ScoreCommandConfig, out: &Path) -> CliResult<()> {
    let test = read_points(&cfg.test)?;
    let calibration = cfg.calibration.as_deref().map(read_points).transpose()?;
    if cfg.compute_baseline && calibration.is_none() {
        return Err(CliError::Config("baseline needs --calibration (or pass --no-baseline)".into()));
    }
    if cfg.alpha.is_some() && calibration.is_none() {
        return Err(CliError::Config("--alpha needs --calibration".into()));
    }
    let pred = load_predictor(&cfg.predictor)?;
    let score = load_score(&cfg.score)?;
    let options = BatchOptions {
        compute_baseline: cfg.compute_baseline,
        route: cfg.route,
        per_dimension: cfg.per_dimension,
        alpha: cfg.alpha,
        mode: cfg.mode,
        ..BatchOptions::default()
    };
    let (batch, base) = batch_adjusted_residuals(
        &test.points,
        calibration.as_ref().map(|c| c.points.as_slice()),
        pred.as_ref(),
        &score,
        &options,
        &mut Rng::new(cfg.seed),
    )?;

    let mut header: Vec<String> = vec!["index".into(), "raw".into(), "adjusted".into()];
    if base.threshold.is_some() {
        header.push("flagged".into());
    }
    if test.labels.is_some() {
        header.push("label".into());
    }
    let rows: Vec<Vec<String>> = (0..batch.raw.len())
        .map(|i| {
            let mut r = vec![i.to_string(), batch.raw[i].to_string(), batch.adjusted[i].to_string()];
            if let Some(t) = base.threshold {
                r.push((tastekit::detector::decide(batch.adjusted[i], t, cfg.mode) as u8).to_string());
            }
            if let Some(l) = &test.labels {
                r.push((l[i] as u8).to_string());
            }
            r
        })
        .collect();
    write_table(&out.join("residuals.csv"), &header, &rows)?;

    if let Some(pd) = &batch.per_dimension {
        let d = pd.baseline.len();
        let mut header = vec!["index".to_string()];
        header.extend((1..=d).map(|i| format!("raw_{i}")));
        header.extend((1..=d).map(|i| format!("adjusted_{i}")));
        let rows: Vec<Vec<String>> = pd
            .raw
            .iter()
            .zip(&pd.adjusted)
            .enumerate()
            .map(|(i, (r, a))| std::iter::once(i.to_string()).chain(r.iter().chain(a).map(|v| v.to_string())).collect())
            .collect();
        write_table(&out.join("per-dimension.csv"), &header, &rows)?;
    }

    write_json(
        &out.join("baseline.json"),
        &serde_json::json!({ "calibration": base, "provenance": batch.provenance, "route": batch.route }),
    )?;
    if let (Some(labels), Some(t), Some(alpha)) = (&test.labels, base.threshold, cfg.alpha) {
        let mut report = DetectionReport::evaluate(batch.adjusted.clone(), labels.clone(), alpha, t, cfg.mode, cfg.seed)?;
        report.provenance = Some(batch.provenance.clone());
        write_json(&out.join("detection.json"), &report)?;
    }
    write_json(&out.join("effective-config.json"), cfg)
}
