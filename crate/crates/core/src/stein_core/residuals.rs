//! Batched adjusted residuals `r_f(x) = L_p̃ f(x) − D_f`.
//!
//! Every sample owns a random substream keyed by its index, so results do
//! not depend on batch boundaries or on how many worker threads run.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{langevin_apply_with, per_dimension_residuals, HvpMethod, LaplacianRoute};
use crate::detector::{calibrate, ResidualMode};
use crate::error::{Error, Result};
use crate::numkit::{mean_and_stderr, norm_sq, Rng};
use crate::predictors::Predictor;
use crate::score_models::ScoreModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchOptions {
    /// Estimate `D_f` as the calibration mean of raw values; otherwise `D_f = 0`.
    pub compute_baseline: bool,
    pub route: LaplacianRoute,
    #[serde(default)]
    pub hvp: HvpMethod,
    pub per_dimension: bool,
    /// When set, a threshold `τ_α` is calibrated on the calibration residuals.
    pub alpha: Option<f64>,
    pub mode: ResidualMode,
}

impl Default for BatchOptions {
    fn default() -> Self {
        BatchOptions {
            compute_baseline: true,
            route: LaplacianRoute::Exact,
            hvp: HvpMethod::default(),
            per_dimension: false,
            alpha: None,
            mode: ResidualMode::Absolute,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub predictor: String,
    pub score_model: String,
    pub seed: u64,
    /// Multi-class heads feed the residual through the predictor's class
    /// selection (argmax or pinned); recorded here.
    pub output_convention: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerDimensionResiduals {
    /// `n × d` raw values `r_{f,i}(x)`.
    pub raw: Vec<Vec<f64>>,
    pub baseline: Vec<f64>,
    pub adjusted: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualBatch {
    pub raw: Vec<f64>,
    pub baseline: f64,
    pub adjusted: Vec<f64>,
    pub per_dimension: Option<PerDimensionResiduals>,
    pub route: LaplacianRoute,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBaseline {
    pub baseline: f64,
    pub per_dimension: Option<Vec<f64>>,
    pub threshold: Option<f64>,
    pub alpha: Option<f64>,
    pub mode: ResidualMode,
    pub n_calibration: usize,
}

/// Raw `L_p̃ f` values; sample `i` draws Hutchinson probes from
/// `Rng::substream(seed, i)`.
pub fn raw_stein_values(
    xs: &[Vec<f64>],
    pred: &dyn Predictor,
    score: &ScoreModel,
    route: LaplacianRoute,
    hvp: HvpMethod,
    seed: u64,
) -> Result<Vec<f64>> {
    xs.par_iter()
        .enumerate()
        .map(|(i, x)| langevin_apply_with(pred, score, x, route, hvp, &mut Rng::substream(seed, i as u64)))
        .collect()
}

fn per_dimension_matrix(xs: &[Vec<f64>], pred: &dyn Predictor, score: &ScoreModel, route: LaplacianRoute) -> Result<Vec<Vec<f64>>> {
    xs.par_iter()
        .map(|x| {
            let mut r = per_dimension_residuals(pred, score, x)?;
            if route == LaplacianRoute::Omitted {
                // drop ∂_ii f to stay consistent with the scalar route
                let s = score.score(x)?;
                let g = pred.gradient(x)?;
                r = s.iter().zip(&g).map(|(a, b)| a * b).collect();
            }
            Ok(r)
        })
        .collect()
}

fn column_means(rows: &[Vec<f64>]) -> Vec<f64> {
    let d = rows.first().map_or(0, Vec::len);
    let n = rows.len() as f64;
    (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect()
}

fn output_convention(pred: &dyn Predictor) -> String {
    let id = pred.id();
    if id.contains("softmax-argmax") {
        "argmax-class".into()
    } else if id.contains("softmax-class") {
        "pinned-class".into()
    } else {
        "scalar-output".into()
    }
}

pub fn batch_adjusted_residuals(
    test: &[Vec<f64>],
    calibration: Option<&[Vec<f64>]>,
    pred: &dyn Predictor,
    score: &ScoreModel,
    options: &BatchOptions,
    rng: &mut Rng,
) -> Result<(ResidualBatch, CalibrationBaseline)> {
    if test.is_empty() {
        return Err(Error::InsufficientSamples { required: 1, got: 0 });
    }
    if options.per_dimension && !matches!(options.route, LaplacianRoute::Exact | LaplacianRoute::Omitted) {
        return Err(Error::RouteConflict(format!(
            "per-dimension residuals need the exact Hessian diagonal, not route '{}'",
            options.route
        )));
    }
    let calibration = match (options.compute_baseline, calibration) {
        (true, None) => return Err(Error::MissingCalibration),
        (true, Some([])) => return Err(Error::MissingCalibration),
        (_, c) => c,
    };
    let seed = rng.seed();
    let cal_seed = rng.fork_seed();
    let test_seed = rng.fork_seed();

    let cal_raw = match calibration {
        Some(c) if options.compute_baseline || options.alpha.is_some() => {
            Some(raw_stein_values(c, pred, score, options.route, options.hvp, cal_seed)?)
        }
        _ => None,
    };
    let baseline = match (&cal_raw, options.compute_baseline) {
        (Some(v), true) => v.iter().sum::<f64>() / v.len() as f64,
        _ => 0.0,
    };

    let raw = raw_stein_values(test, pred, score, options.route, options.hvp, test_seed)?;
    let adjusted: Vec<f64> = raw.iter().map(|u| u - baseline).collect();

    let mut per_dim_baseline = None;
    let per_dimension = if options.per_dimension {
        let rows = per_dimension_matrix(test, pred, score, options.route)?;
        let base = match (calibration, options.compute_baseline) {
            (Some(c), true) => column_means(&per_dimension_matrix(c, pred, score, options.route)?),
            _ => vec![0.0; pred.input_dim()],
        };
        let adjusted = rows.iter().map(|r| r.iter().zip(&base).map(|(a, b)| a - b).collect()).collect();
        per_dim_baseline = Some(base.clone());
        Some(PerDimensionResiduals { raw: rows, baseline: base, adjusted })
    } else {
        None
    };

    let threshold = match (options.alpha, &cal_raw) {
        (Some(alpha), Some(v)) => {
            let centered: Vec<f64> = v.iter().map(|u| u - baseline).collect();
            Some(calibrate(&centered, alpha, options.mode)?)
        }
        (Some(_), None) => return Err(Error::MissingCalibration),
        _ => None,
    };

    let batch = ResidualBatch {
        raw,
        baseline,
        adjusted,
        per_dimension,
        route: options.route,
        provenance: Provenance {
            predictor: pred.id(),
            score_model: score.kind_name().to_string(),
            seed,
            output_convention: output_convention(pred),
        },
    };
    let cal = CalibrationBaseline {
        baseline,
        per_dimension: per_dim_baseline,
        threshold,
        alpha: options.alpha,
        mode: options.mode,
        n_calibration: calibration.map_or(0, <[Vec<f64>]>::len),
    };
    Ok((batch, cal))
}

/// Empirical adjusted functional: mean adjusted residual over the batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TasteEstimate {
    pub estimate: f64,
    /// `None` when the batch holds a single sample.
    pub stderr: Option<f64>,
    pub n: usize,
}

pub fn taste_functional_estimate(batch: &ResidualBatch) -> Result<TasteEstimate> {
    match batch.adjusted.len() {
        0 => Err(Error::InsufficientSamples { required: 1, got: 0 }),
        1 => Ok(TasteEstimate { estimate: batch.adjusted[0], stderr: None, n: 1 }),
        n => {
            let m = mean_and_stderr(&batch.adjusted)?;
            Ok(TasteEstimate { estimate: m.mean, stderr: Some(m.stderr), n })
        }
    }
}

/// `E_q‖A_p f‖² − E_p‖A_p f‖²` with its combined standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L2Statistic {
    pub statistic: f64,
    pub stderr: f64,
    pub test_mean: f64,
    pub calibration_mean: f64,
}

pub fn first_order_l2_corrected(
    test: &[Vec<f64>],
    calibration: &[Vec<f64>],
    pred: &dyn Predictor,
    score: &ScoreModel,
) -> Result<L2Statistic> {
    let sq = |xs: &[Vec<f64>]| -> Result<Vec<f64>> {
        xs.par_iter().map(|x| Ok(norm_sq(&super::first_order_apply(pred, score, x)?))).collect()
    };
    let t = mean_and_stderr(&sq(test)?)?;
    let c = mean_and_stderr(&sq(calibration)?)?;
    Ok(L2Statistic {
        statistic: t.mean - c.mean,
        stderr: (t.stderr.powi(2) + c.stderr.powi(2)).sqrt(),
        test_mean: t.mean,
        calibration_mean: c.mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Matrix;
    use crate::predictors::{Activation, Head, Mlp, MlpPredictor, QuadraticFunction};
    use crate::score_models::SamplableDistribution;

    fn draws(n: usize, seed: u64) -> Vec<Vec<f64>> {
        SamplableDistribution::standard_gaussian(2).sample(n, &mut Rng::new(seed))
    }

    #[test]
    fn without_baseline_adjusted_equals_raw() {
        let f = QuadraticFunction::difference_task();
        let p = ScoreModel::standard_gaussian(2);
        let opts = BatchOptions { compute_baseline: false, ..Default::default() };
        let (b, cal) = batch_adjusted_residuals(&draws(100, 1), None, &f, &p, &opts, &mut Rng::new(0)).unwrap();
        assert_eq!(b.raw, b.adjusted);
        assert_eq!(cal.baseline, 0.0);
    }

    #[test]
    fn baseline_requires_calibration() {
        let f = QuadraticFunction::difference_task();
        let p = ScoreModel::standard_gaussian(2);
        let r = batch_adjusted_residuals(&draws(10, 1), None, &f, &p, &BatchOptions::default(), &mut Rng::new(0));
        assert_eq!(r.unwrap_err(), Error::MissingCalibration);
        let r = batch_adjusted_residuals(&[], Some(&draws(10, 1)), &f, &p, &BatchOptions::default(), &mut Rng::new(0));
        assert!(r.is_err());
    }

    #[test]
    fn exact_score_baseline_vanishes() {
        let f = QuadraticFunction::difference_task();
        let p = ScoreModel::standard_gaussian(2);
        let cal = draws(100_000, 2);
        let (_, base) = batch_adjusted_residuals(&draws(10, 3), Some(&cal), &f, &p, &BatchOptions::default(), &mut Rng::new(0)).unwrap();
        let se = mean_and_stderr(&raw_stein_values(&cal, &f, &p, LaplacianRoute::Exact, HvpMethod::default(), 0).unwrap()).unwrap().stderr;
        assert!(base.baseline.abs() < 3.0 * se);
    }

    #[test]
    fn biased_score_baseline_converges() {
        let f = QuadraticFunction::difference_task();
        let biased = ScoreModel::with_constant_bias(ScoreModel::standard_gaussian(2), vec![1.0, 0.0]).unwrap();
        let cal = draws(100_000, 4);
        let (b, base) = batch_adjusted_residuals(&draws(1000, 5), Some(&cal), &f, &biased, &BatchOptions::default(), &mut Rng::new(0)).unwrap();
        // raw value x₁ − x₂ − 1, mean −1, sd √2
        assert!((base.baseline + 1.0).abs() < 3.0 * (2.0f64 / 1e5).sqrt());
        assert!(b.adjusted.iter().zip(&b.raw).all(|(a, r)| (a - (r - base.baseline)).abs() == 0.0));
    }

    #[test]
    fn per_dimension_mode_and_route_conflict() {
        let f = QuadraticFunction::difference_task();
        let p = ScoreModel::standard_gaussian(2);
        let opts = BatchOptions { per_dimension: true, ..Default::default() };
        let cal = draws(5000, 6);
        let test = draws(200, 7);
        let (b, base) = batch_adjusted_residuals(&test, Some(&cal), &f, &p, &opts, &mut Rng::new(0)).unwrap();
        let pd = b.per_dimension.unwrap();
        for (row, u) in pd.raw.iter().zip(&b.raw) {
            assert!((row.iter().sum::<f64>() - u).abs() < 1e-9);
        }
        assert_eq!(base.per_dimension.unwrap().len(), 2);
        let bad = BatchOptions { route: LaplacianRoute::Hutchinson { probes: 4 }, ..opts };
        assert!(matches!(
            batch_adjusted_residuals(&test, Some(&cal), &f, &p, &bad, &mut Rng::new(0)),
            Err(Error::RouteConflict(_))
        ));
    }

    #[test]
    fn batching_and_threads_do_not_change_results() {
        let net = Mlp::new(&[2, 8, 1], Activation::Tanh, &mut Rng::new(8)).unwrap();
        let f = MlpPredictor::new(net, Head::LinearScalar).unwrap();
        let p = ScoreModel::standard_gaussian(2);
        let xs = draws(64, 9);
        let route = LaplacianRoute::Hutchinson { probes: 3 };
        let all = raw_stein_values(&xs, &f, &p, route, HvpMethod::default(), 77).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let single = pool.install(|| raw_stein_values(&xs, &f, &p, route, HvpMethod::default(), 77).unwrap());
        assert_eq!(all, single);
        // evaluating one sample alone with its substream reproduces its value
        let mut rng = Rng::substream(77, 10);
        let one = langevin_apply_with(&f, &p, &xs[10], route, HvpMethod::default(), &mut rng).unwrap();
        assert_eq!(one, all[10]);
    }

    #[test]
    fn taste_estimate_edge_cases() {
        let f = QuadraticFunction::difference_task();
        let p = ScoreModel::standard_gaussian(2);
        let opts = BatchOptions { compute_baseline: false, ..Default::default() };
        let (b, _) = batch_adjusted_residuals(&[vec![1.0, 2.0]], None, &f, &p, &opts, &mut Rng::new(0)).unwrap();
        let t = taste_functional_estimate(&b).unwrap();
        assert_eq!((t.estimate, t.stderr, t.n), (-1.0, None, 1));
    }

    #[test]
    fn threshold_is_calibrated_when_alpha_given() {
        let f = QuadraticFunction::difference_task();
        let p = ScoreModel::with_linear_bias(ScoreModel::standard_gaussian(2), Matrix::diag(&[0.1, 0.0])).unwrap();
        let opts = BatchOptions { alpha: Some(0.05), ..Default::default() };
        let (_, base) = batch_adjusted_residuals(&draws(10, 1), Some(&draws(2000, 2)), &f, &p, &opts, &mut Rng::new(0)).unwrap();
        assert!(base.threshold.unwrap() > 0.0);
        assert_eq!(base.n_calibration, 2000);
    }

    #[test]
    fn l2_statistic_is_zero_under_no_shift() {
        let f = QuadraticFunction::difference_task();
        let p = ScoreModel::standard_gaussian(2);
        let s = first_order_l2_corrected(&draws(50_000, 10), &draws(50_000, 11), &f, &p).unwrap();
        assert!(s.statistic.abs() < 3.0 * s.stderr, "{s:?}");
        assert!(s.calibration_mean > 0.0);
    }
}
