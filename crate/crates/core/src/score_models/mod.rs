//! Score fields `s_p(x) = ∇log p(x)`: closed-form Gaussians and mixtures,
//! exponential tilts, perturbed (biased) scores and learned networks.
//!
//! The tilt normalizer `Z_ε` never needs evaluating: only `∇log q_ε` and
//! density ratios of closed-form families enter any computation.

mod dsm;
mod sampling;

pub use dsm::{fisher_divergence, train_dsm_score, DsmNetConfig, DsmTraining, LearnedScore};
pub use sampling::{tilt_importance_weights, ImportanceWeights, MixtureForm, SamplableDistribution};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{dot, Matrix};

/// Shift potential `h: ℝ^d → ℝ` used in exponential tilts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Potential {
    /// `h(x) = c·x`
    Linear { c: Vec<f64> },
    /// `h(x) = xᵀAx` with symmetric `A`
    Quadratic { a: Matrix },
}

impl Potential {
    pub fn quadratic(a: Matrix) -> Result<Self> {
        if !a.is_symmetric(1e-12) {
            return Err(Error::InvalidArgument("quadratic potential needs a symmetric matrix".into()));
        }
        Ok(Potential::Quadratic { a })
    }

    pub fn dim(&self) -> usize {
        match self {
            Potential::Linear { c } => c.len(),
            Potential::Quadratic { a } => a.rows,
        }
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x)?;
        match self {
            Potential::Linear { c } => Ok(dot(c, x)),
            Potential::Quadratic { a } => a.quadratic_form(x),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x)?;
        match self {
            Potential::Linear { c } => Ok(c.clone()),
            Potential::Quadratic { a } => Ok(a.mul_vec(x)?.into_iter().map(|v| 2.0 * v).collect()),
        }
    }
}

pub(crate) fn check_dim(expected: usize, x: &[f64]) -> Result<()> {
    if x.len() != expected {
        return Err(Error::DimensionMismatch { expected, got: x.len() });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "params")]
pub enum ScoreModel {
    IsotropicGaussian { mean: Vec<f64>, variance: f64 },
    /// Components with shared-within-component isotropic variances.
    GaussianMixture { weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<f64> },
    /// `q_ε ∝ base · exp(ε h)`
    Tilted { base: Box<ScoreModel>, potential: Potential, strength: f64 },
    /// `s̃(x) = s_base(x) + M x + δ`, an approximate score with known error.
    Perturbed { base: Box<ScoreModel>, offset: Vec<f64>, linear: Option<Matrix> },
    Learned(LearnedScore),
}

fn log_gaussian(x: &[f64], mean: &[f64], variance: f64) -> f64 {
    let d = x.len() as f64;
    let r2: f64 = x.iter().zip(mean).map(|(a, b)| (a - b) * (a - b)).sum();
    -0.5 * r2 / variance - 0.5 * d * (2.0 * std::f64::consts::PI * variance).ln()
}

/// Component log-densities plus log weights, and their log-sum-exp.
fn mixture_log_terms(weights: &[f64], means: &[Vec<f64>], variances: &[f64], x: &[f64]) -> (Vec<f64>, f64) {
    let total: f64 = weights.iter().sum();
    let terms: Vec<f64> = weights
        .iter()
        .zip(means)
        .zip(variances)
        .map(|((w, m), v)| (w / total).ln() + log_gaussian(x, m, *v))
        .collect();
    let mx = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = mx + terms.iter().map(|t| (t - mx).exp()).sum::<f64>().ln();
    (terms, lse)
}

impl ScoreModel {
    pub fn standard_gaussian(d: usize) -> Self {
        ScoreModel::IsotropicGaussian { mean: vec![0.0; d], variance: 1.0 }
    }

    pub fn gaussian(mean: Vec<f64>, variance: f64) -> Result<Self> {
        if !(variance > 0.0) {
            return Err(Error::InvalidArgument("variance must be positive".into()));
        }
        Ok(ScoreModel::IsotropicGaussian { mean, variance })
    }

    pub fn mixture(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() || weights.len() != variances.len() {
            return Err(Error::InvalidArgument("mixture needs matching non-empty weights, means, variances".into()));
        }
        let d = means[0].len();
        if means.iter().any(|m| m.len() != d) {
            return Err(Error::InvalidArgument("mixture means differ in dimension".into()));
        }
        if weights.iter().any(|w| !(*w > 0.0)) || variances.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidArgument("mixture weights and variances must be positive".into()));
        }
        Ok(ScoreModel::GaussianMixture { weights, means, variances })
    }

    pub fn tilted(base: ScoreModel, potential: Potential, strength: f64) -> Result<Self> {
        if potential.dim() != base.dim() {
            return Err(Error::DimensionMismatch { expected: base.dim(), got: potential.dim() });
        }
        Ok(ScoreModel::Tilted { base: Box::new(base), potential, strength })
    }

    /// Adds a constant bias `δ` to the base score.
    pub fn with_constant_bias(base: ScoreModel, offset: Vec<f64>) -> Result<Self> {
        check_dim(base.dim(), &offset)?;
        Ok(ScoreModel::Perturbed { base: Box::new(base), offset, linear: None })
    }

    /// Adds a linear field `M x` to the base score.
    pub fn with_linear_bias(base: ScoreModel, linear: Matrix) -> Result<Self> {
        let d = base.dim();
        if linear.rows != d || linear.cols != d {
            return Err(Error::DimensionMismatch { expected: d, got: linear.rows });
        }
        Ok(ScoreModel::Perturbed { base: Box::new(base), offset: vec![0.0; d], linear: Some(linear) })
    }

    pub fn dim(&self) -> usize {
        match self {
            ScoreModel::IsotropicGaussian { mean, .. } => mean.len(),
            ScoreModel::GaussianMixture { means, .. } => means[0].len(),
            ScoreModel::Tilted { base, .. } | ScoreModel::Perturbed { base, .. } => base.dim(),
            ScoreModel::Learned(l) => l.net.input_dim(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ScoreModel::IsotropicGaussian { .. } => "isotropic-gaussian",
            ScoreModel::GaussianMixture { .. } => "gaussian-mixture",
            ScoreModel::Tilted { .. } => "tilted",
            ScoreModel::Perturbed { .. } => "perturbed",
            ScoreModel::Learned(_) => "learned-mlp",
        }
    }

    pub fn score(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x)?;
        match self {
            ScoreModel::IsotropicGaussian { mean, variance } => {
                Ok(x.iter().zip(mean).map(|(a, m)| -(a - m) / variance).collect())
            }
            ScoreModel::GaussianMixture { weights, means, variances } => {
                let (terms, lse) = mixture_log_terms(weights, means, variances, x);
                let mut s = vec![0.0; x.len()];
                for ((t, m), v) in terms.iter().zip(means).zip(variances) {
                    let r = (t - lse).exp();
                    for ((o, a), mu) in s.iter_mut().zip(x).zip(m) {
                        *o -= r * (a - mu) / v;
                    }
                }
                Ok(s)
            }
            ScoreModel::Tilted { base, potential, strength } => {
                let mut s = base.score(x)?;
                crate::numkit::add_scaled(&mut s, *strength, &potential.gradient(x)?);
                Ok(s)
            }
            ScoreModel::Perturbed { base, offset, linear } => {
                let mut s = base.score(x)?;
                crate::numkit::add_scaled(&mut s, 1.0, offset);
                if let Some(m) = linear {
                    crate::numkit::add_scaled(&mut s, 1.0, &m.mul_vec(x)?);
                }
                Ok(s)
            }
            ScoreModel::Learned(l) => l.net.forward(x),
        }
    }

    /// `log p(x)` up to an additive constant fixed per model. Gaussian kinds
    /// return the normalized log-density.
    pub fn log_density_up_to_constant(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x)?;
        match self {
            ScoreModel::IsotropicGaussian { mean, variance } => Ok(log_gaussian(x, mean, *variance)),
            ScoreModel::GaussianMixture { weights, means, variances } => {
                Ok(mixture_log_terms(weights, means, variances, x).1)
            }
            ScoreModel::Tilted { base, potential, strength } => {
                Ok(base.log_density_up_to_constant(x)? + strength * potential.value(x)?)
            }
            ScoreModel::Perturbed { base, offset, linear } => {
                let mut v = base.log_density_up_to_constant(x)? + dot(offset, x);
                if let Some(m) = linear {
                    if !m.is_symmetric(1e-12) {
                        return Err(Error::DensityUnavailable("non-conservative score perturbation".into()));
                    }
                    v += 0.5 * m.quadratic_form(x)?;
                }
                Ok(v)
            }
            ScoreModel::Learned(_) => Err(Error::DensityUnavailable("learned-mlp".into())),
        }
    }
}

/// `u_{p→q}(x) = ∇log(q(x)/p(x)) = s_q(x) − s_p(x)`
pub fn shift_score_field(p: &ScoreModel, q: &ScoreModel, x: &[f64]) -> Result<Vec<f64>> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), got: q.dim() });
    }
    let sq = q.score(x)?;
    let sp = p.score(x)?;
    Ok(sq.iter().zip(&sp).map(|(a, b)| a - b).collect())
}
