//! `experiment`: report bundles for each shift experiment.

use std::f64::consts::PI;
use std::path::Path;

use serde::Serialize;
use tastekit::detector::{calibrate, power_curve, DetectionReport, PowerPoint};
use tastekit::numkit::{mean_and_stderr, Matrix, Rng};
use tastekit::predictors::{Activation, Head, Mlp, MlpPredictor, Predictor, QuadraticFunction};
use tastekit::score_models::{Potential, SamplableDistribution, ScoreModel};
use tastekit::shift_lab::{
    blindspot_closed_form, blindspot_sweep, directional_decomposition_check, fisher_bound_check, mixture_build,
    projection_identity_check, rotate, rotation_sweep, tilt_slope_check, tilt_variance_check, IdentityCheckReport,
    RotationSweep, ShiftFamily, SweepRow, TiltSlopeReport,
};
use tastekit::stein_core::{hutchinson_laplacian, per_dimension_residuals, raw_stein_values, HvpMethod, LaplacianRoute};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::data::{write_json, write_rows};
use crate::error::{CliError, CliResult};
use crate::specs::{load_predictor, load_score};

pub fn experiment(cfg: &ExperimentConfig, out: &Path) -> CliResult<()> {
    if cfg.samples < 4 {
        return Err(CliError::Config("samples must be at least 4".into()));
    }
    match cfg.kind {
        ExperimentKind::Rotate => rotate_kind(cfg, out)?,
        ExperimentKind::Tilt => tilt_kind(cfg, out)?,
        ExperimentKind::Mixed => mixed_kind(cfg, out)?,
        ExperimentKind::Blindspot => blindspot_kind(cfg, out)?,
        ExperimentKind::Identities => identities_kind(cfg, out)?,
    }
    write_json(&out.join("effective-config.json"), cfg)
}

pub fn angle_grid(steps: usize) -> CliResult<Vec<f64>> {
    if steps == 0 {
        return Err(CliError::Config("angle_steps must be at least 1".into()));
    }
    Ok((0..steps).map(|k| 2.0 * PI * k as f64 / steps as f64).collect())
}

fn argmax(values: &[f64]) -> usize {
    values.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map_or(0, |(i, _)| i)
}

fn samplable_reference(cfg: &ExperimentConfig) -> CliResult<SamplableDistribution> {
    let model = load_score(&cfg.score)?;
    SamplableDistribution::new(model).map_err(|_| {
        CliError::Config(format!("experiment '{:?}' needs a closed-form reference score, got '{}'", cfg.kind, cfg.score))
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RotationSummary {
    pub epsilon: f64,
    /// `μ₁ − μ₂` of the shifted mean at each angle.
    pub closed_form: Vec<f64>,
    /// `max_φ |S̃ − (μ₁ − μ₂)| / stderr`.
    pub max_closed_form_deviation: f64,
    pub argmax_abs_taste: f64,
    pub argmax_mse: f64,
    /// Angles where `|μ₁ − μ₂|` is maximal (ties within 1e-9).
    pub argmax_abs_closed_form: Vec<f64>,
    pub taste_argmax_on_closed_form_argmax: bool,
    pub taste_argmax_equals_mse_argmax: bool,
    pub loglik_range: f64,
    pub loglik_stderr: f64,
}

fn rotate_kind(cfg: &ExperimentConfig, out: &Path) -> CliResult<()> {
    let pred = load_predictor(&cfg.predictor)?;
    let score = load_score(&cfg.score)?;
    let p = SamplableDistribution::standard_gaussian(2);
    let sh = &cfg.shift;
    let sweep = RotationSweep {
        epsilon: sh.epsilon,
        direction: sh.direction.clone(),
        angles: angle_grid(sh.angle_steps)?,
        n: cfg.samples,
        route: cfg.route,
    };
    let task = QuadraticFunction::difference_task();
    let rows = rotation_sweep(pred.as_ref(), &task, &p, &score, &sweep, &mut Rng::new(cfg.seed))?;
    write_rows(&out.join("rotation.csv"), &rows)?;
    write_json(&out.join("rotation-summary.json"), &summarize_rotation(sh.epsilon, &sh.direction, &rows))
}

pub fn summarize_rotation(epsilon: f64, direction: &[f64], rows: &[SweepRow]) -> RotationSummary {
    let closed: Vec<f64> = rows
        .iter()
        .map(|r| {
            let m = rotate(direction, r.phi);
            epsilon * (m[0] - m[1])
        })
        .collect();
    let dev = rows
        .iter()
        .zip(&closed)
        .map(|(r, c)| (r.taste - c).abs() / r.taste_stderr.max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    let abs_taste: Vec<f64> = rows.iter().map(|r| r.taste.abs()).collect();
    let mse: Vec<f64> = rows.iter().map(|r| r.mse).collect();
    let top = closed.iter().map(|c| c.abs()).fold(0.0, f64::max);
    let closed_argmax: Vec<f64> =
        rows.iter().zip(&closed).filter(|(_, c)| (c.abs() - top).abs() <= 1e-9 * top.max(1.0)).map(|(r, _)| r.phi).collect();
    let (ta, ma) = (argmax(&abs_taste), argmax(&mse));
    let ll: Vec<f64> = rows.iter().map(|r| r.loglik).collect();
    let range = ll.iter().cloned().fold(f64::MIN, f64::max) - ll.iter().cloned().fold(f64::MAX, f64::min);
    RotationSummary {
        epsilon,
        max_closed_form_deviation: dev,
        argmax_abs_taste: rows[ta].phi,
        argmax_mse: rows[ma].phi,
        taste_argmax_on_closed_form_argmax: closed_argmax.contains(&rows[ta].phi),
        taste_argmax_equals_mse_argmax: ta == ma,
        argmax_abs_closed_form: closed_argmax,
        closed_form: closed,
        loglik_range: range,
        loglik_stderr: rows.iter().map(|r| r.loglik_stderr).fold(0.0, f64::max),
    }
}

#[derive(Serialize)]
struct TiltRow {
    direction: String,
    epsilon: f64,
    taste: f64,
    taste_stderr: f64,
    fd_slope: Option<f64>,
    fd_slope_stderr: Option<f64>,
}

#[derive(Serialize)]
struct TiltResult {
    direction: Vec<f64>,
    slope: TiltSlopeReport,
    slope_agrees: bool,
    variance: IdentityCheckReport,
    variance_holds: bool,
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

fn tilt_kind(cfg: &ExperimentConfig, out: &Path) -> CliResult<()> {
    let pred = load_predictor(&cfg.predictor)?;
    let p = samplable_reference(cfg)?;
    let mut rng = Rng::new(cfg.seed);
    let mut rows = Vec::new();
    let mut results = Vec::new();
    for c in &cfg.shift.tilt_directions {
        let h = Potential::Linear { c: c.clone() };
        let slope = tilt_slope_check(pred.as_ref(), &p, &h, &cfg.shift.epsilon_grid, cfg.samples, &mut rng.fork())?;
        let variance = tilt_variance_check(pred.as_ref(), &p, &h, cfg.shift.variance_epsilon, cfg.samples, &mut rng.fork())?;
        for r in &slope.rows {
            rows.push(TiltRow {
                direction: fmt_vec(c),
                epsilon: r.epsilon,
                taste: r.taste,
                taste_stderr: r.taste_stderr,
                fd_slope: r.fd_slope,
                fd_slope_stderr: r.fd_slope_stderr,
            });
        }
        results.push(TiltResult {
            direction: c.clone(),
            slope_agrees: slope.slope_agrees(0.05, 3.0),
            variance_holds: variance.holds_within(3.0),
            slope,
            variance,
        });
    }
    write_rows(&out.join("tilt-slope.csv"), &rows)?;
    write_json(&out.join("tilt.json"), &results)
}

#[derive(Serialize)]
struct PowerRow {
    corruption: f64,
    power: Option<f64>,
    fpr: Option<f64>,
    n: usize,
}

#[derive(Serialize)]
struct ShiftPowerRow {
    shift: f64,
    power: Option<f64>,
    fpr: Option<f64>,
    n: usize,
}

#[derive(Serialize)]
struct HistogramRow {
    bin_lo: f64,
    bin_hi: f64,
    in_count: usize,
    out_count: usize,
}

fn out_distribution(magnitude: f64) -> CliResult<SamplableDistribution> {
    let s = magnitude * std::f64::consts::FRAC_1_SQRT_2;
    Ok(SamplableDistribution::gaussian(vec![s, -s], 1.0)?)
}

fn mixed_kind(cfg: &ExperimentConfig, out: &Path) -> CliResult<()> {
    let pred = load_predictor(&cfg.predictor)?;
    let score = load_score(&cfg.score)?;
    let p = SamplableDistribution::standard_gaussian(2);
    let sh = &cfg.shift;
    let mut rng = Rng::new(cfg.seed);
    let cal = p.sample(sh.calibration_samples, &mut rng);
    let cal_raw = raw_stein_values(&cal, pred.as_ref(), &score, cfg.route, HvpMethod::default(), rng.fork_seed())?;
    let baseline = cal_raw.iter().sum::<f64>() / cal_raw.len() as f64;
    let centered: Vec<f64> = cal_raw.iter().map(|v| v - baseline).collect();
    let tau = calibrate(&centered, cfg.alpha, cfg.mode)?;
    let probe_seed = rng.fork_seed();
    let pipeline = |xs: &[Vec<f64>]| -> tastekit::Result<Vec<f64>> {
        let raw = raw_stein_values(xs, pred.as_ref(), &score, cfg.route, HvpMethod::default(), probe_seed)?;
        Ok(raw.into_iter().map(|v| v - baseline).collect())
    };
    write_json(
        &out.join("calibration.json"),
        &serde_json::json!({
            "baseline": baseline, "threshold": tau, "alpha": cfg.alpha, "mode": cfg.mode,
            "n_calibration": cal.len(),
        }),
    )?;

    let out_dist = out_distribution(sh.out_shift)?;
    let curve = power_curve(&p, &out_dist, &sh.corruption_grid, cfg.samples, tau, cfg.mode, &pipeline, &mut rng.fork())?;
    let to_rows = |c: &[PowerPoint]| -> Vec<PowerRow> {
        c.iter().map(|pt| PowerRow { corruption: pt.corruption, power: pt.power, fpr: pt.fpr, n: pt.n }).collect()
    };
    write_rows(&out.join("power-curve.csv"), &to_rows(&curve))?;

    let mut shift_rows = Vec::new();
    for &m in &sh.shift_magnitudes {
        let pt = power_curve(&p, &out_distribution(m)?, &[sh.shift_corruption], cfg.samples, tau, cfg.mode, &pipeline, &mut rng.fork())?;
        shift_rows.push(ShiftPowerRow { shift: m, power: pt[0].power, fpr: pt[0].fpr, n: pt[0].n });
    }
    write_rows(&out.join("power-vs-shift.csv"), &shift_rows)?;

    let set = mixture_build(&p, &out_dist, sh.shift_corruption, cfg.samples, &mut rng.fork())?;
    let scores = pipeline(&set.points)?;
    write_rows(&out.join("histogram.csv"), &histogram(&scores, &set.is_out, sh.histogram_bins)?)?;
    let mut report = DetectionReport::evaluate(scores, set.is_out.clone(), cfg.alpha, tau, cfg.mode, cfg.seed)?;
    report.power_curve = Some(curve);
    write_json(&out.join("detection.json"), &report)
}

fn histogram(scores: &[f64], is_out: &[bool], bins: usize) -> CliResult<Vec<HistogramRow>> {
    if bins == 0 {
        return Err(CliError::Config("histogram_bins must be at least 1".into()));
    }
    let lo = scores.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut rows: Vec<HistogramRow> = (0..bins)
        .map(|k| HistogramRow { bin_lo: lo + k as f64 * width, bin_hi: lo + (k + 1) as f64 * width, in_count: 0, out_count: 0 })
        .collect();
    for (s, o) in scores.iter().zip(is_out) {
        let k = (((s - lo) / width) as usize).min(bins - 1);
        if *o {
            rows[k].out_count += 1;
        } else {
            rows[k].in_count += 1;
        }
    }
    Ok(rows)
}

#[derive(Serialize)]
struct BlindspotCsvRow {
    theta: f64,
    first_order: f64,
    first_order_stderr: f64,
    /// Reference curve for f = x₂ − x₁.
    closed_form: f64,
    langevin: f64,
    langevin_stderr: f64,
    l2: f64,
    l2_stderr: f64,
}

/// Angles where the curve is within 3 stderr of zero, or changes sign
/// between neighbours (linear interpolation).
pub fn zero_crossings(thetas: &[f64], values: &[f64], stderrs: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    for k in 0..thetas.len() {
        if values[k].abs() <= 3.0 * stderrs[k] {
            out.push(thetas[k]);
        } else if k + 1 < thetas.len()
            && values[k + 1].abs() > 3.0 * stderrs[k + 1]
            && values[k].signum() != values[k + 1].signum()
        {
            let t = values[k] / (values[k] - values[k + 1]);
            out.push(thetas[k] + t * (thetas[k + 1] - thetas[k]));
        }
    }
    out
}

fn blindspot_kind(cfg: &ExperimentConfig, out: &Path) -> CliResult<()> {
    let pred = load_predictor(&cfg.predictor)?;
    let sh = &cfg.shift;
    let thetas = angle_grid(sh.angle_steps)?;
    let rows = blindspot_sweep(pred.as_ref(), sh.epsilon, &thetas, &sh.projection, cfg.samples, &mut Rng::new(cfg.seed))?;
    let csv: Vec<BlindspotCsvRow> = rows
        .iter()
        .map(|r| BlindspotCsvRow {
            theta: r.theta,
            first_order: r.first_order,
            first_order_stderr: r.first_order_stderr,
            closed_form: blindspot_closed_form(sh.epsilon, r.theta, &sh.projection),
            langevin: r.langevin,
            langevin_stderr: r.langevin_stderr,
            l2: r.l2,
            l2_stderr: r.l2_stderr,
        })
        .collect();
    write_rows(&out.join("blindspot.csv"), &csv)?;
    let fo: Vec<f64> = rows.iter().map(|r| r.first_order).collect();
    let se: Vec<f64> = rows.iter().map(|r| r.first_order_stderr).collect();
    let dev = csv
        .iter()
        .map(|r| (r.first_order - r.closed_form).abs() / r.first_order_stderr.max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    write_json(
        &out.join("blindspot.json"),
        &serde_json::json!({
            "epsilon": sh.epsilon,
            "projection": sh.projection,
            "first_order_zero_crossings": zero_crossings(&thetas, &fo, &se),
            "max_closed_form_deviation": dev,
        }),
    )
}

#[derive(Serialize)]
struct CheckEntry {
    name: String,
    pass: bool,
    report: serde_json::Value,
}

fn entry<T: Serialize>(name: String, pass: bool, report: &T) -> CliResult<CheckEntry> {
    Ok(CheckEntry { name, pass, report: serde_json::to_value(report).map_err(|e| CliError::Io(e.to_string()))? })
}

fn identities_kind(cfg: &ExperimentConfig, out: &Path) -> CliResult<()> {
    let pred = load_predictor(&cfg.predictor)?;
    let p = samplable_reference(cfg)?;
    if p.dim() != 2 {
        return Err(CliError::Config("identities battery runs in two dimensions".into()));
    }
    let n = cfg.samples;
    let mut rng = Rng::new(cfg.seed);
    let mut checks = Vec::new();

    let tanh = MlpPredictor::new(Mlp::new(&[2, 16, 16, 1], Activation::Tanh, &mut rng.fork())?, Head::LinearScalar)?;
    let quad = QuadraticFunction::sum_of_squares(2);
    let predictors: [(&str, &dyn Predictor); 3] = [("configured", pred.as_ref()), ("sum-of-squares", &quad), ("tanh-net", &tanh)];
    let dists = [
        ("reference", p.clone()),
        ("gaussian-shifted-scaled", SamplableDistribution::gaussian(vec![1.0, -1.0], 2.0)?),
        (
            "mixture",
            SamplableDistribution::new(ScoreModel::mixture(
                vec![0.3, 0.7],
                vec![vec![-2.0, 0.0], vec![1.0, 1.0]],
                vec![0.5, 1.5],
            )?)?,
        ),
    ];
    for (pn, f) in predictors {
        for (dn, d) in &dists {
            let xs = d.sample(n, &mut rng);
            let raw = raw_stein_values(&xs, f, d.model(), LaplacianRoute::Exact, HvpMethod::default(), 0)?;
            let m = mean_and_stderr(&raw)?;
            let zero = tastekit::numkit::MeanStderr { mean: 0.0, stderr: 0.0 };
            let r = IdentityCheckReport::new("stein-identity", tastekit::shift_lab::Relation::Equality, m, zero, m.stderr, n, rng.seed(), vec![]);
            checks.push(entry(format!("stein-identity/{pn}/{dn}"), r.holds_within(3.0), &r)?);
        }
    }

    let shifts = [
        ("mean-shift", ShiftFamily::MeanShift { shift: vec![2.0, 0.0] }),
        ("linear-tilt", ShiftFamily::Tilt { potential: Potential::Linear { c: vec![0.5, -0.5] }, strength: 1.0 }),
    ];
    for (pn, f) in [("configured", pred.as_ref()), ("tanh-net", &tanh as &dyn Predictor)] {
        for (dn, d) in [&dists[0], &dists[2]] {
            for (sn, fam) in &shifts {
                let q = fam.resolve(d)?;
                let r = projection_identity_check(f, d.model(), &q, n, &mut rng.fork())?;
                checks.push(entry(format!("projection-identity/{pn}/{dn}/{sn}"), r.holds_within(3.0), &r)?);
            }
        }
    }

    for c in [vec![1.0, 0.0], vec![1.0, 1.0]] {
        let h = Potential::Linear { c: c.clone() };
        let r = tilt_slope_check(pred.as_ref(), &p, &h, &[0.01, 0.02, 0.05], n, &mut rng.fork())?;
        checks.push(entry(format!("tilt-slope/{}", fmt_vec(&c)), r.slope_agrees(0.05, 3.0), &r)?);
        let v = tilt_variance_check(pred.as_ref(), &p, &h, 0.05, n, &mut rng.fork())?;
        checks.push(entry(format!("tilt-variance/{}", fmt_vec(&c)), v.holds_within(3.0), &v)?);
    }

    let shifted = ShiftFamily::MeanShift { shift: vec![2.0, 0.0] }.resolve(&p)?;
    let biases = [
        ("constant-bias", ScoreModel::with_constant_bias(p.model().clone(), vec![1.0, 0.0])?),
        ("linear-bias", ScoreModel::with_linear_bias(p.model().clone(), Matrix::diag(&[0.5, 0.0]))?),
    ];
    for (bn, approx) in &biases {
        for (qn, q) in [("no-shift", &p), ("mean-shift", &shifted)] {
            let r = directional_decomposition_check(pred.as_ref(), &p, q, approx, n, &mut rng.fork())?;
            checks.push(entry(format!("decomposition/{bn}/{qn}"), r.holds_within(3.0), &r)?);
        }
        let r = fisher_bound_check(pred.as_ref(), &p, &shifted, approx, n, &mut rng.fork())?;
        checks.push(entry(format!("fisher-bound/{bn}"), r.holds_within(3.0), &r)?);
    }

    let xs = p.sample(n.min(2000), &mut rng);
    let mut worst = 0.0f64;
    for x in &xs {
        let parts = per_dimension_residuals(pred.as_ref(), p.model(), x)?;
        let whole = tastekit::stein_core::langevin_apply(pred.as_ref(), p.model(), x, LaplacianRoute::Exact, &mut Rng::new(0))?;
        worst = worst.max((parts.iter().sum::<f64>() - whole).abs());
    }
    checks.push(entry("per-dimension-sum".into(), worst <= 1e-9, &serde_json::json!({ "max_abs_gap": worst }))?);

    let mut worst = 0.0f64;
    for k in [1, 4, 16] {
        let est = hutchinson_laplacian(&quad, &[0.3, -1.2], k, HvpMethod::Exact, &mut rng.fork())?;
        worst = worst.max((est.estimate - 4.0).abs());
    }
    checks.push(entry("hutchinson-quadratic-exact".into(), worst <= 1e-9, &serde_json::json!({ "max_abs_gap": worst }))?);

    let all_pass = checks.iter().all(|c| c.pass);
    write_json(
        &out.join("identities.json"),
        &serde_json::json!({ "seed": cfg.seed, "samples": n, "all_pass": all_pass, "checks": checks }),
    )
}
