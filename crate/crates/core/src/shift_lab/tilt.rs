//! First-order response of the Stein functional to exponential tilts
//! `q_ε ∝ p e^{εh}`.
//!
//! Linear tilts of Gaussians and mixtures are sampled exactly with common
//! random numbers, so the finite-difference slope is a paired estimate.
//! Any other potential falls back to self-normalized importance weights on
//! `p`-draws, guarded by an effective-sample-size floor.

use serde::{Deserialize, Serialize};

use super::{check_n, par_eval, IdentityCheckReport, Relation, Term};
use crate::error::{Error, Result};
use crate::numkit::{covariance, mean_and_stderr, MeanStderr, Rng};
use crate::predictors::Predictor;
use crate::score_models::{tilt_importance_weights, Potential, SamplableDistribution, ScoreModel};
use crate::stein_core::{langevin_apply, LaplacianRoute};

/// ESS floor, as a fraction of `n`, for importance-weighted tilts.
pub const MIN_ESS_FRACTION: f64 = 0.1;

/// Default ε-grid, kept inside the small-ε regime of the expansion.
pub const DEFAULT_EPSILON_GRID: [f64; 5] = [0.01, 0.02, 0.05, 0.1, 0.2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TiltMode {
    ExactSampling,
    ImportanceSampling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TiltSlopeRow {
    pub epsilon: f64,
    pub taste: f64,
    pub taste_stderr: f64,
    /// `(S_f(ε) − S_f(0)) / ε`; absent at `ε = 0`.
    pub fd_slope: Option<f64>,
    pub fd_slope_stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TiltSlopeReport {
    pub mode: TiltMode,
    pub rows: Vec<TiltSlopeRow>,
    /// Finite-difference slope at the smallest non-zero |ε| against `Cov_p(L_p f, h)`.
    pub check: IdentityCheckReport,
}

impl TiltSlopeReport {
    /// Agreement within `max(rel · |predicted|, k · combined stderr)`.
    pub fn slope_agrees(&self, rel: f64, k: f64) -> bool {
        let c = &self.check;
        (c.lhs - c.rhs).abs() <= (rel * c.rhs.abs()).max(k * c.combined_stderr)
    }
}

fn lp(pred: &dyn Predictor, p: &ScoreModel, x: &[f64]) -> Result<f64> {
    langevin_apply(pred, p, x, LaplacianRoute::Exact, &mut Rng::new(0))
}

/// Samplable tilt, or `None` when only importance weights are available.
fn exact_tilt(p: &SamplableDistribution, h: &Potential, eps: f64) -> Result<Option<SamplableDistribution>> {
    match SamplableDistribution::new(ScoreModel::tilted(p.model().clone(), h.clone(), eps)?) {
        Ok(q) => Ok(Some(q)),
        Err(Error::NotSamplable(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn stderr_of(values: &[f64]) -> Result<f64> {
    Ok(mean_and_stderr(values)?.stderr)
}

fn centered(v: &[f64]) -> Vec<f64> {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| x - m).collect()
}

/// `Cov(a, b)` with the standard error of the mean of centered products.
fn cov_with_stderr(a: &[f64], b: &[f64]) -> Result<MeanStderr> {
    let (ca, cb) = (centered(a), centered(b));
    let prod: Vec<f64> = ca.iter().zip(&cb).map(|(x, y)| x * y).collect();
    Ok(MeanStderr { mean: covariance(a, b)?, stderr: stderr_of(&prod)? })
}

pub fn tilt_slope_check(
    pred: &dyn Predictor,
    p: &SamplableDistribution,
    h: &Potential,
    epsilons: &[f64],
    n: usize,
    rng: &mut Rng,
) -> Result<TiltSlopeReport> {
    check_n(n)?;
    if epsilons.is_empty() {
        return Err(Error::InvalidArgument("epsilon grid is empty".into()));
    }
    let seed = rng.seed();
    let draw_seed = rng.fork_seed();
    let xp = p.sample(n, &mut Rng::new(draw_seed));
    let a_p = par_eval(&xp, |x| lp(pred, p.model(), x))?;
    let h_p = par_eval(&xp, |x| h.value(x))?;
    let s0 = a_p.iter().sum::<f64>() / n as f64;

    let exact = epsilons.iter().all(|e| matches!(exact_tilt(p, h, *e), Ok(Some(_))));
    let mode = if exact { TiltMode::ExactSampling } else { TiltMode::ImportanceSampling };
    let mut rows = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let (taste, diff) = match mode {
            TiltMode::ExactSampling => {
                let q = exact_tilt(p, h, eps)?.expect("checked samplable");
                let xq = q.sample(n, &mut Rng::new(draw_seed));
                let a_q = par_eval(&xq, |x| lp(pred, p.model(), x))?;
                let d: Vec<f64> = a_q.iter().zip(&a_p).map(|(a, b)| a - b).collect();
                (mean_and_stderr(&a_q)?, mean_and_stderr(&d)?)
            }
            TiltMode::ImportanceSampling => {
                let w = tilt_importance_weights(&xp, h, eps, MIN_ESS_FRACTION)?.weights;
                let s = w.iter().zip(&a_p).map(|(w, a)| w * a).sum::<f64>();
                let se = w.iter().zip(&a_p).map(|(w, a)| (w * (a - s)).powi(2)).sum::<f64>().sqrt();
                // delta-method influence of S(ε) − S(0)
                let nf = n as f64;
                let infl: Vec<f64> = w.iter().zip(&a_p).map(|(w, a)| nf * w * (a - s) - (a - s0)).collect();
                let ss = infl.iter().map(|v| v * v).sum::<f64>();
                (MeanStderr { mean: s, stderr: se }, MeanStderr { mean: s - s0, stderr: ss.sqrt() / nf })
            }
        };
        let (fd_slope, fd_slope_stderr) = if eps == 0.0 {
            (None, None)
        } else {
            (Some(diff.mean / eps), Some(diff.stderr / eps.abs()))
        };
        rows.push(TiltSlopeRow { epsilon: eps, taste: taste.mean, taste_stderr: taste.stderr, fd_slope, fd_slope_stderr });
    }

    let predicted = cov_with_stderr(&a_p, &h_p)?;
    let first = rows
        .iter()
        .filter(|r| r.fd_slope.is_some())
        .min_by(|a, b| a.epsilon.abs().total_cmp(&b.epsilon.abs()))
        .ok_or_else(|| Error::InvalidArgument("epsilon grid needs a non-zero entry".into()))?;
    let fd = MeanStderr { mean: first.fd_slope.unwrap(), stderr: first.fd_slope_stderr.unwrap() };
    let check = IdentityCheckReport::new(
        "tilt-slope",
        Relation::Equality,
        fd,
        predicted,
        fd.stderr.hypot(predicted.stderr),
        n,
        seed,
        vec![Term { name: "epsilon".into(), value: first.epsilon, stderr: 0.0 }],
    );
    Ok(TiltSlopeReport { mode, rows, check })
}

/// `Var_{q_ε}[L_p f]` against `Var_p[L_p f] + ε Cov_p((L_p f)², h)`.
pub fn tilt_variance_check(
    pred: &dyn Predictor,
    p: &SamplableDistribution,
    h: &Potential,
    eps: f64,
    n: usize,
    rng: &mut Rng,
) -> Result<IdentityCheckReport> {
    check_n(n)?;
    let seed = rng.seed();
    let draw_seed = rng.fork_seed();
    let xp = p.sample(n, &mut Rng::new(draw_seed));
    let a_p = par_eval(&xp, |x| lp(pred, p.model(), x))?;
    let h_p = par_eval(&xp, |x| h.value(x))?;

    let lhs = match exact_tilt(p, h, eps)? {
        Some(q) => {
            let xq = q.sample(n, &mut Rng::new(draw_seed));
            let a_q = par_eval(&xq, |x| lp(pred, p.model(), x))?;
            let sq: Vec<f64> = centered(&a_q).iter().map(|v| v * v).collect();
            MeanStderr { mean: crate::numkit::sample_variance(&a_q)?, stderr: stderr_of(&sq)? }
        }
        None => {
            let w = tilt_importance_weights(&xp, h, eps, MIN_ESS_FRACTION)?.weights;
            let s = w.iter().zip(&a_p).map(|(w, a)| w * a).sum::<f64>();
            let v = w.iter().zip(&a_p).map(|(w, a)| w * (a - s).powi(2)).sum::<f64>();
            let se = w.iter().zip(&a_p).map(|(w, a)| (w * ((a - s).powi(2) - v)).powi(2)).sum::<f64>().sqrt();
            MeanStderr { mean: v, stderr: se }
        }
    };

    let var_p = crate::numkit::sample_variance(&a_p)?;
    let a2: Vec<f64> = a_p.iter().map(|a| a * a).collect();
    let cov = covariance(&a2, &h_p)?;
    // joint influence of both first-order terms, which share draws
    let (ca, ca2, ch) = (centered(&a_p), centered(&a2), centered(&h_p));
    let infl: Vec<f64> = (0..n).map(|i| ca[i] * ca[i] + eps * ca2[i] * ch[i]).collect();
    let rhs = MeanStderr { mean: var_p + eps * cov, stderr: stderr_of(&infl)? };
    Ok(IdentityCheckReport::new(
        "tilt-variance",
        Relation::Equality,
        lhs,
        rhs,
        lhs.stderr.hypot(rhs.stderr),
        n,
        seed,
        vec![
            Term { name: "epsilon".into(), value: eps, stderr: 0.0 },
            Term { name: "variance-p".into(), value: var_p, stderr: 0.0 },
            Term { name: "first-order-coefficient".into(), value: cov, stderr: 0.0 },
        ],
    ))
}
