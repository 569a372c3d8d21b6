//! Denoising score matching with a single noise scale.
//!
//! The network regresses `−z/σ` from `x + σz`; its minimizer is the score of
//! the σ-smoothed data density. Gradients are taken on the σ²-weighted
//! objective `‖σ·net(x + σz) + z‖²`, which has the same minimizer and
//! unit-scale targets; the logged loss is the unweighted objective
//! `‖net(x + σz) + z/σ‖²` on a fixed evaluation noise draw.
//!
//! Each example contributes an antithetic pair `(z, −z)`. The pair average is
//! an unbiased estimate of the same objective, and the `z·net(x)` term that
//! dominates single-draw gradient noise cancels within the pair.

use serde::{Deserialize, Serialize};

use super::{SamplableDistribution, ScoreModel};
use crate::error::{Error, Result};
use crate::numkit::{mean_and_stderr, norm_sq, MeanStderr, Rng};
use crate::predictors::{minimize, Activation, Mlp, OptimizerConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DsmNetConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for DsmNetConfig {
    fn default() -> Self {
        DsmNetConfig { hidden: vec![64, 64], activation: Activation::Tanh }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DsmTraining {
    pub n_samples: usize,
    pub optimizer: OptimizerConfig,
    pub loss_history: Vec<f64>,
    pub degenerate_data: bool,
    #[serde(default)]
    pub fisher_divergence: Option<MeanStderr>,
}

/// Learned score network; serializes as the score checkpoint layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnedScore {
    pub dimension: usize,
    #[serde(flatten)]
    pub net: Mlp,
    pub noise_std: f64,
    pub training: DsmTraining,
}

const EVAL_POINTS: usize = 2000;

pub fn train_dsm_score(
    samples: &[Vec<f64>],
    net_config: &DsmNetConfig,
    noise_std: f64,
    optimizer: &OptimizerConfig,
    rng: &mut Rng,
) -> Result<ScoreModel> {
    if samples.len() < 100 {
        return Err(Error::InsufficientSamples { required: 100, got: samples.len() });
    }
    if !(noise_std > 0.0 && noise_std.is_finite()) {
        return Err(Error::InvalidArgument("noise std must be positive".into()));
    }
    let d = samples[0].len();
    if let Some(bad) = samples.iter().find(|x| x.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, got: bad.len() });
    }
    let degenerate = samples.iter().all(|x| x == &samples[0]);
    if degenerate {
        log::warn!("degenerate data: all {} training points coincide", samples.len());
    }

    let mut sizes = vec![d];
    sizes.extend(&net_config.hidden);
    sizes.push(d);
    let mut net = Mlp::new(&sizes, net_config.activation, rng)?;

    let mut eval_rng = rng.fork();
    let eval: Vec<(usize, Vec<f64>)> = (0..EVAL_POINTS.min(samples.len()))
        .map(|_| (eval_rng.below(samples.len()), eval_rng.normal_vec(d)))
        .collect();
    let sigma = noise_std;

    let history = minimize(
        &mut net,
        samples.len(),
        optimizer,
        rng,
        |net, i, rng, grads| {
            let z = rng.normal_vec(d);
            let mut loss = 0.0;
            for sign in [1.0, -1.0] {
                let noisy: Vec<f64> = samples[i].iter().zip(&z).map(|(x, e)| x + sign * sigma * e).collect();
                let cache = net.forward_cached(&noisy).expect("dimension checked");
                let resid: Vec<f64> = cache.output.iter().zip(&z).map(|(o, e)| sigma * o + sign * e).collect();
                let g: Vec<f64> = resid.iter().map(|r| sigma * r).collect();
                net.backward(&cache, &g, Some(grads));
                loss += 0.5 * norm_sq(&resid);
            }
            loss
        },
        |net| {
            let total: f64 = eval
                .iter()
                .map(|(i, z)| {
                    let noisy: Vec<f64> = samples[*i].iter().zip(z).map(|(x, e)| x + sigma * e).collect();
                    let out = net.forward(&noisy).expect("dimension checked");
                    out.iter().zip(z).map(|(o, e)| (o + e / sigma).powi(2)).sum::<f64>()
                })
                .sum();
            total / eval.len() as f64
        },
    )?;

    Ok(ScoreModel::Learned(LearnedScore {
        dimension: d,
        net,
        noise_std,
        training: DsmTraining {
            n_samples: samples.len(),
            optimizer: *optimizer,
            loss_history: history,
            degenerate_data: degenerate,
            fisher_divergence: None,
        },
    }))
}

/// Monte-Carlo estimate of `J(p‖p̃) = E_p ‖s̃(X) − s_p(X)‖²`.
pub fn fisher_divergence(
    p: &SamplableDistribution,
    approx: &ScoreModel,
    n: usize,
    rng: &mut Rng,
) -> Result<MeanStderr> {
    if n < 100 {
        return Err(Error::InsufficientSamples { required: 100, got: n });
    }
    let values = p
        .sample(n, rng)
        .iter()
        .map(|x| {
            let a = approx.score(x)?;
            let s = p.score(x)?;
            Ok(a.iter().zip(&s).map(|(u, v)| (u - v) * (u - v)).sum())
        })
        .collect::<Result<Vec<f64>>>()?;
    mean_and_stderr(&values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Matrix;
    use crate::predictors::Optimizer;

    #[test]
    fn fisher_divergence_closed_forms() {
        let p = SamplableDistribution::standard_gaussian(1);
        let mut rng = Rng::new(1);
        let shifted = ScoreModel::gaussian(vec![0.5], 1.0).unwrap();
        let j = fisher_divergence(&p, &shifted, 10_000, &mut rng).unwrap();
        assert!((j.mean - 0.25).abs() <= 3.0 * j.stderr + 1e-12);
        let exact = fisher_divergence(&p, p.model(), 1000, &mut rng).unwrap();
        assert_eq!(exact.mean, 0.0);
        // −x + x: the zero field
        let zero = ScoreModel::with_linear_bias(ScoreModel::standard_gaussian(1), Matrix::identity(1)).unwrap();
        let j = fisher_divergence(&p, &zero, 100_000, &mut rng).unwrap();
        assert!((j.mean - 1.0).abs() <= 3.0 * j.stderr, "{j:?}");
        assert!(fisher_divergence(&p, &zero, 10, &mut rng).is_err());
    }

    fn opt(epochs: usize) -> OptimizerConfig {
        OptimizerConfig { learning_rate: 1e-3, epochs, batch_size: 64, optimizer: Optimizer::adam() }
    }

    #[test]
    fn rejects_empty_and_bad_sigma() {
        let mut rng = Rng::new(2);
        assert!(train_dsm_score(&[], &DsmNetConfig::default(), 0.1, &opt(1), &mut rng).is_err());
        let xs = SamplableDistribution::standard_gaussian(2).sample(200, &mut rng);
        assert!(train_dsm_score(&xs, &DsmNetConfig::default(), 0.0, &opt(1), &mut rng).is_err());
    }

    #[test]
    fn degenerate_data_is_flagged() {
        let mut rng = Rng::new(3);
        let xs = vec![vec![1.0, 2.0]; 150];
        let ScoreModel::Learned(l) = train_dsm_score(&xs, &DsmNetConfig::default(), 0.5, &opt(2), &mut rng).unwrap() else {
            panic!("expected learned model");
        };
        assert!(l.training.degenerate_data);
    }

    #[test]
    fn checkpoint_round_trip_and_no_density() {
        let mut rng = Rng::new(4);
        let xs = SamplableDistribution::standard_gaussian(2).sample(200, &mut rng);
        let m = train_dsm_score(&xs, &DsmNetConfig::default(), 0.3, &opt(1), &mut rng).unwrap();
        let ScoreModel::Learned(l) = &m else { panic!() };
        let json = serde_json::to_string(l).unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        for key in ["dimension", "layer_sizes", "activation", "weights", "biases", "noise_std", "training"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(&serde_json::from_str::<LearnedScore>(&json).unwrap(), l);
        assert!(matches!(m.log_density_up_to_constant(&[0.0, 0.0]), Err(Error::DensityUnavailable(_))));
    }
}
