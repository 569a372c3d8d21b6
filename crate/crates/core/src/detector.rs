//! Calibrated OOD decision rule and ranking metrics.
//!
//! Scores are oriented so that larger means more out-of-distribution after
//! the mode transform: `|r|` (absolute), `r` (signed-upper), `−r` (signed-lower).
//! A point is flagged when its transformed score is strictly above `τ_α`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{empirical_quantile, Rng};
use crate::score_models::SamplableDistribution;
use crate::shift_lab::mixture_build;

pub const MIN_CALIBRATION_SAMPLES: usize = 20;
pub const MIN_OUT_SCORES_FPR95: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResidualMode {
    #[default]
    Absolute,
    SignedUpper,
    SignedLower,
}

impl ResidualMode {
    #[inline]
    pub fn transform(self, r: f64) -> f64 {
        match self {
            ResidualMode::Absolute => r.abs(),
            ResidualMode::SignedUpper => r,
            ResidualMode::SignedLower => -r,
        }
    }
}

/// `τ_α` as the empirical `(1 − α)`-quantile of the transformed residuals.
pub fn calibrate(residuals: &[f64], alpha: f64, mode: ResidualMode) -> Result<f64> {
    calibrate_with_min(residuals, alpha, mode, MIN_CALIBRATION_SAMPLES)
}

pub fn calibrate_with_min(residuals: &[f64], alpha: f64, mode: ResidualMode, min_samples: usize) -> Result<f64> {
    if residuals.len() < min_samples.max(1) {
        return Err(Error::InsufficientSamples { required: min_samples.max(1), got: residuals.len() });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidLevel(alpha));
    }
    let t: Vec<f64> = residuals.iter().map(|r| mode.transform(*r)).collect();
    empirical_quantile(&t, 1.0 - alpha)
}

#[inline]
pub fn decide(residual: f64, threshold: f64, mode: ResidualMode) -> bool {
    mode.transform(residual) > threshold
}

/// Probability that a random out-score exceeds a random in-score, ties
/// counted one half (Mann–Whitney U through average ranks).
pub fn auroc(in_scores: &[f64], out_scores: &[f64]) -> Result<f64> {
    if in_scores.is_empty() || out_scores.is_empty() {
        return Err(Error::InsufficientSamples { required: 1, got: 0 });
    }
    if in_scores.iter().chain(out_scores).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let mut all: Vec<(f64, bool)> = in_scores
        .iter()
        .map(|v| (*v, false))
        .chain(out_scores.iter().map(|v| (*v, true)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum_out = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their average
        let avg = (i + j + 2) as f64 / 2.0;
        rank_sum_out += avg * all[i..=j].iter().filter(|e| e.1).count() as f64;
        i = j + 1;
    }
    let (n_in, n_out) = (in_scores.len() as f64, out_scores.len() as f64);
    Ok((rank_sum_out - n_out * (n_out + 1.0) / 2.0) / (n_in * n_out))
}

/// Fraction of in-scores strictly above the empirical 5% quantile of the
/// out-scores (the threshold that at least 95% of out-scores reach).
pub fn fpr_at_95_tpr(in_scores: &[f64], out_scores: &[f64]) -> Result<f64> {
    if out_scores.len() < MIN_OUT_SCORES_FPR95 {
        return Err(Error::InsufficientSamples { required: MIN_OUT_SCORES_FPR95, got: out_scores.len() });
    }
    if in_scores.is_empty() {
        return Err(Error::InsufficientSamples { required: 1, got: 0 });
    }
    let t = empirical_quantile(out_scores, 0.05)?;
    Ok(in_scores.iter().filter(|s| **s > t).count() as f64 / in_scores.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    pub corruption: f64,
    /// Flag rate among out-of-distribution members; `None` when there are none.
    pub power: Option<f64>,
    /// Flag rate among in-distribution members; `None` when there are none.
    pub fpr: Option<f64>,
    /// Fraction of correct in/out decisions.
    pub accuracy: f64,
    pub n: usize,
    pub n_out: usize,
}

/// Scoring pipeline used by the power curve: maps points to residuals.
pub trait ResidualPipeline: Sync {
    fn residuals(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>>;
}

impl<F> ResidualPipeline for F
where
    F: Fn(&[Vec<f64>]) -> Result<Vec<f64>> + Sync,
{
    fn residuals(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        self(xs)
    }
}

/// Rejection rates of the calibrated test across corruption levels.
#[allow(clippy::too_many_arguments)]
pub fn power_curve(
    in_dist: &SamplableDistribution,
    out_dist: &SamplableDistribution,
    corruption_grid: &[f64],
    n_per_point: usize,
    threshold: f64,
    mode: ResidualMode,
    pipeline: &dyn ResidualPipeline,
    rng: &mut Rng,
) -> Result<Vec<PowerPoint>> {
    corruption_grid
        .iter()
        .map(|&c| {
            let set = mixture_build(in_dist, out_dist, c, n_per_point, rng)?;
            let r = pipeline.residuals(&set.points)?;
            let (mut flagged_out, mut flagged_in, mut correct) = (0usize, 0usize, 0usize);
            for (ri, is_out) in r.iter().zip(&set.is_out) {
                let flag = decide(*ri, threshold, mode);
                if flag == *is_out {
                    correct += 1;
                }
                match (flag, is_out) {
                    (true, true) => flagged_out += 1,
                    (true, false) => flagged_in += 1,
                    _ => {}
                }
            }
            let n_out = set.n_out();
            let n_in = set.len() - n_out;
            Ok(PowerPoint {
                corruption: c,
                power: (n_out > 0).then(|| flagged_out as f64 / n_out as f64),
                fpr: (n_in > 0).then(|| flagged_in as f64 / n_in as f64),
                accuracy: correct as f64 / set.len().max(1) as f64,
                n: set.len(),
                n_out,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub scores: Vec<f64>,
    /// `true` marks ground-truth out-of-distribution samples.
    pub labels: Vec<bool>,
    pub alpha: f64,
    pub threshold: f64,
    pub mode: ResidualMode,
    pub decisions: Vec<bool>,
    pub fpr: Option<f64>,
    pub tpr: Option<f64>,
    pub auroc: Option<f64>,
    pub fpr95: Option<f64>,
    pub power_curve: Option<Vec<PowerPoint>>,
    pub seed: u64,
    pub provenance: Option<crate::stein_core::Provenance>,
}

impl DetectionReport {
    pub fn evaluate(
        scores: Vec<f64>,
        labels: Vec<bool>,
        alpha: f64,
        threshold: f64,
        mode: ResidualMode,
        seed: u64,
    ) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::LengthMismatch { left: scores.len(), right: labels.len() });
        }
        let decisions: Vec<bool> = scores.iter().map(|s| decide(*s, threshold, mode)).collect();
        let (mut ins, mut outs) = (Vec::new(), Vec::new());
        let (mut fp, mut tp) = (0usize, 0usize);
        for ((s, l), d) in scores.iter().zip(&labels).zip(&decisions) {
            if *l {
                outs.push(mode.transform(*s));
                tp += *d as usize;
            } else {
                ins.push(mode.transform(*s));
                fp += *d as usize;
            }
        }
        let both = !ins.is_empty() && !outs.is_empty();
        Ok(DetectionReport {
            fpr: (!ins.is_empty()).then(|| fp as f64 / ins.len() as f64),
            tpr: (!outs.is_empty()).then(|| tp as f64 / outs.len() as f64),
            auroc: if both { Some(auroc(&ins, &outs)?) } else { None },
            fpr95: if both && outs.len() >= MIN_OUT_SCORES_FPR95 { Some(fpr_at_95_tpr(&ins, &outs)?) } else { None },
            scores,
            labels,
            alpha,
            threshold,
            mode,
            decisions,
            power_curve: None,
            seed,
            provenance: None,
        })
    }
}
