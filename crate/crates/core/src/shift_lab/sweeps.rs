//! Angle sweeps over the 2D rotation family.
//!
//! Every angle reuses one set of antithetic noise pairs `(z, −z)`: shifted
//! draws differ across angles only through the mean, and standard errors
//! are taken over pair averages, which is the correct variance for that
//! design.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{par_eval, rotate};
use crate::error::{Error, Result};
use crate::numkit::{dot, mean_and_stderr, norm_sq, MeanStderr, Rng};
use crate::predictors::Predictor;
use crate::score_models::{SamplableDistribution, ScoreModel};
use crate::stein_core::{first_order_apply, langevin_apply, LaplacianRoute};

/// `n` draws of `N(mean, I)` as adjacent antithetic pairs; `n` rounds down to even.
pub fn antithetic_gaussian(mean: &[f64], n: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n / 2 {
        let z = rng.normal_vec(mean.len());
        out.push(mean.iter().zip(&z).map(|(m, v)| m + v).collect());
        out.push(mean.iter().zip(&z).map(|(m, v)| m - v).collect());
    }
    out
}

fn shifted(noise: &[Vec<f64>], mean: &[f64]) -> Vec<Vec<f64>> {
    noise.iter().map(|z| z.iter().zip(mean).map(|(a, b)| a + b).collect()).collect()
}

/// Mean and standard error over antithetic pair averages.
fn pair_stats(values: &[f64]) -> Result<MeanStderr> {
    let pairs: Vec<f64> = values.chunks_exact(2).map(|c| 0.5 * (c[0] + c[1])).collect();
    mean_and_stderr(&pairs)
}

fn check_even_n(n: usize) -> Result<()> {
    if n < 4 {
        return Err(Error::InsufficientSamples { required: 4, got: n });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationSweep {
    pub epsilon: f64,
    /// Unit base direction `u`.
    pub direction: Vec<f64>,
    pub angles: Vec<f64>,
    pub n: usize,
    pub route: LaplacianRoute,
}

/// One row of the sweep table; field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub phi: f64,
    /// Baseline-corrected functional `E_q[L_p̃ f] − E_p[L_p̃ f]`.
    pub taste: f64,
    pub taste_stderr: f64,
    /// `E_q[(f − y)²]` against the task target.
    pub mse: f64,
    /// Mean log-density of the shifted draws under `p`.
    pub loglik: f64,
    pub loglik_stderr: f64,
}

/// Sweeps `q_φ = N(ε R_φ u, I₂)` over the angle grid. `score` may be an
/// approximation of `p`'s score; the baseline is taken on `p`-draws.
pub fn rotation_sweep(
    pred: &dyn Predictor,
    target: &dyn Predictor,
    p: &SamplableDistribution,
    score: &ScoreModel,
    sweep: &RotationSweep,
    rng: &mut Rng,
) -> Result<Vec<SweepRow>> {
    if sweep.angles.is_empty() {
        return Err(Error::InvalidArgument("angle grid is empty".into()));
    }
    check_even_n(sweep.n)?;
    if p.dim() != 2 || sweep.direction.len() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: p.dim().max(sweep.direction.len()) });
    }
    let route = sweep.route;
    let l = |x: &[f64], i: usize, seed: u64| langevin_apply(pred, score, x, route, &mut Rng::substream(seed, i as u64));
    let base_seed = rng.fork_seed();
    let noise_seed = rng.fork_seed();
    let probe_seed = rng.fork_seed();

    let xp = p.sample(sweep.n, &mut Rng::new(base_seed));
    let base_vals: Vec<f64> = xp.par_iter().enumerate().map(|(i, x)| l(x, i, probe_seed)).collect::<Result<_>>()?;
    let baseline = mean_and_stderr(&base_vals)?;
    let noise = antithetic_gaussian(&[0.0, 0.0], sweep.n, &mut Rng::new(noise_seed));

    sweep
        .angles
        .par_iter()
        .enumerate()
        .map(|(k, &phi)| {
            let mean: Vec<f64> = rotate(&sweep.direction, phi).iter().map(|v| sweep.epsilon * v).collect();
            let xq = shifted(&noise, &mean);
            let seed = Rng::substream(probe_seed, k as u64 + 1).seed();
            let vals: Vec<f64> = xq.iter().enumerate().map(|(i, x)| l(x, i, seed)).collect::<Result<_>>()?;
            let t = pair_stats(&vals)?;
            let err: Vec<f64> = xq
                .iter()
                .map(|x| Ok((pred.value(x)? - target.value(x)?).powi(2)))
                .collect::<Result<_>>()?;
            let ll: Vec<f64> = xq.iter().map(|x| p.log_density(x)).collect::<Result<_>>()?;
            let ll = pair_stats(&ll)?;
            Ok(SweepRow {
                phi,
                taste: t.mean - baseline.mean,
                taste_stderr: t.stderr.hypot(baseline.stderr),
                mse: err.iter().sum::<f64>() / err.len() as f64,
                loglik: ll.mean,
                loglik_stderr: ll.stderr,
            })
        })
        .collect()
}

/// `E_q[A^v_p f]` for `f = x₂ − x₁`, `p = N(0, I₂)`, `q = N(ε(cos θ, sin θ), I₂)`:
/// `ε² (v₁ cos θ + v₂ sin θ)(cos θ − sin θ)`, i.e. `ε² cos 2θ` for `v = (1, 1)`.
pub fn blindspot_closed_form(epsilon: f64, theta: f64, v: &[f64]) -> f64 {
    let (s, c) = theta.sin_cos();
    epsilon * epsilon * (v[0] * c + v[1] * s) * (c - s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlindspotRow {
    pub theta: f64,
    /// Projected first-order functional `E_q[A^v_p f]`.
    pub first_order: f64,
    pub first_order_stderr: f64,
    /// Langevin functional `E_q[L_p f]`.
    pub langevin: f64,
    pub langevin_stderr: f64,
    /// `E_q‖A_p f‖² − E_p‖A_p f‖²`.
    pub l2: f64,
    pub l2_stderr: f64,
}

/// First-order, Langevin and corrected-L² functionals for
/// `p = N(0, I₂)`, `q_θ = N(ε(cos θ, sin θ), I₂)`.
pub fn blindspot_sweep(
    pred: &dyn Predictor,
    epsilon: f64,
    thetas: &[f64],
    v: &[f64],
    n: usize,
    rng: &mut Rng,
) -> Result<Vec<BlindspotRow>> {
    if thetas.is_empty() {
        return Err(Error::InvalidArgument("angle grid is empty".into()));
    }
    check_even_n(n)?;
    let p = ScoreModel::standard_gaussian(2);
    let noise = antithetic_gaussian(&[0.0, 0.0], n, rng);
    let cal_noise = antithetic_gaussian(&[0.0, 0.0], n, rng);
    let a2 = |x: &[f64]| Ok(norm_sq(&first_order_apply(pred, &p, x)?));
    let cal = pair_stats(&par_eval(&cal_noise, a2)?)?;
    thetas
        .par_iter()
        .map(|&theta| {
            let (s, c) = theta.sin_cos();
            let xq = shifted(&noise, &[epsilon * c, epsilon * s]);
            let mut fo = Vec::with_capacity(n);
            let mut lv = Vec::with_capacity(n);
            let mut sq = Vec::with_capacity(n);
            for x in &xq {
                let a = first_order_apply(pred, &p, x)?;
                fo.push(dot(v, &a));
                sq.push(norm_sq(&a));
                lv.push(langevin_apply(pred, &p, x, LaplacianRoute::Exact, &mut Rng::new(0))?);
            }
            let (fo, lv, sq) = (pair_stats(&fo)?, pair_stats(&lv)?, pair_stats(&sq)?);
            Ok(BlindspotRow {
                theta,
                first_order: fo.mean,
                first_order_stderr: fo.stderr,
                langevin: lv.mean,
                langevin_stderr: lv.stderr,
                l2: sq.mean - cal.mean,
                l2_stderr: sq.stderr.hypot(cal.stderr),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictors::QuadraticFunction;
    use std::f64::consts::PI;

    #[test]
    fn antithetic_pairs_cancel() {
        let xs = antithetic_gaussian(&[1.0, -2.0], 11, &mut Rng::new(1));
        assert_eq!(xs.len(), 10);
        for c in xs.chunks(2) {
            assert!((c[0][0] + c[1][0] - 2.0).abs() < 1e-12 && (c[0][1] + c[1][1] + 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_task_rotation_sweep() {
        let f = QuadraticFunction::difference_task();
        let p = SamplableDistribution::standard_gaussian(2);
        let angles: Vec<f64> = (0..8).map(|k| k as f64 * PI / 4.0).collect();
        let sweep = RotationSweep {
            epsilon: 10.0,
            direction: super::super::diagonal_direction(),
            angles: angles.clone(),
            n: 4000,
            route: LaplacianRoute::Exact,
        };
        let rows = rotation_sweep(&f, &f, &p, p.model(), &sweep, &mut Rng::new(2)).unwrap();
        for r in &rows {
            let closed = -10.0 * 2f64.sqrt() * r.phi.sin();
            assert!((r.taste - closed).abs() <= 3.0 * r.taste_stderr + 1e-9, "{r:?}");
            assert_eq!(r.mse, 0.0);
        }
        assert!((rows[2].taste + 14.142135623730951).abs() < 0.1);
        let ll: Vec<f64> = rows.iter().map(|r| r.loglik).collect();
        let range = ll.iter().cloned().fold(f64::MIN, f64::max) - ll.iter().cloned().fold(f64::MAX, f64::min);
        assert!(range < 3.0 * rows[0].loglik_stderr);
    }

    #[test]
    fn blindspot_matches_closed_form() {
        let f = QuadraticFunction::difference_task();
        let thetas: Vec<f64> = (0..=8).map(|k| k as f64 * PI / 8.0).collect();
        let rows = blindspot_sweep(&f, 10.0, &thetas, &[1.0, 1.0], 20_000, &mut Rng::new(3)).unwrap();
        for r in &rows {
            let c = blindspot_closed_form(10.0, r.theta, &[1.0, 1.0]);
            assert!((r.first_order - c).abs() <= 3.0 * r.first_order_stderr + 1e-9, "{r:?} vs {c}");
        }
        assert!((blindspot_closed_form(10.0, 0.0, &[1.0, 1.0]) - 100.0).abs() < 1e-12);
        assert!(blindspot_closed_form(10.0, PI / 4.0, &[1.0, 1.0]).abs() < 1e-12);
        let blind = &rows[2];
        assert!(blind.l2 > 3.0 * blind.l2_stderr);
        let aligned = &rows[6];
        assert!(aligned.langevin.abs() > 10.0 * aligned.langevin_stderr.max(1e-12));
    }
}
