use serde::{Deserialize, Serialize};

use super::{mixture_log_terms, Potential, ScoreModel};
use crate::error::{Error, Result};
use crate::numkit::{dot, norm_sq, Rng};

/// Normalized Gaussian-mixture form of a closed-form distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureForm {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<f64>,
}

impl MixtureForm {
    fn normalized(log_weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<f64>) -> Self {
        let mx = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = log_weights.iter().map(|l| (l - mx).exp()).collect();
        let s: f64 = w.iter().sum();
        MixtureForm { weights: w.into_iter().map(|v| v / s).collect(), means, variances }
    }

    /// Resolves a score model into an exact mixture when the family is closed:
    /// Gaussians, mixtures, and linear tilts of either. A linear tilt
    /// `exp(ε c·x)` maps component `N(m, σ²I)` to `N(m + εσ²c, σ²I)` with weight
    /// multiplied by `exp(ε c·m + ε²σ²‖c‖²/2)`.
    pub fn resolve(model: &ScoreModel) -> Option<MixtureForm> {
        match model {
            ScoreModel::IsotropicGaussian { mean, variance } => Some(MixtureForm {
                weights: vec![1.0],
                means: vec![mean.clone()],
                variances: vec![*variance],
            }),
            ScoreModel::GaussianMixture { weights, means, variances } => Some(MixtureForm::normalized(
                weights.iter().map(|w| w.ln()).collect(),
                means.clone(),
                variances.clone(),
            )),
            ScoreModel::Tilted { base, potential: Potential::Linear { c }, strength } => {
                let b = MixtureForm::resolve(base)?;
                let eps = *strength;
                let c2 = norm_sq(c);
                let log_w = b
                    .weights
                    .iter()
                    .zip(&b.means)
                    .zip(&b.variances)
                    .map(|((w, m), v)| w.ln() + eps * dot(c, m) + 0.5 * eps * eps * v * c2)
                    .collect();
                let means = b
                    .means
                    .iter()
                    .zip(&b.variances)
                    .map(|(m, v)| m.iter().zip(c).map(|(mi, ci)| mi + eps * v * ci).collect())
                    .collect();
                Some(MixtureForm::normalized(log_w, means, b.variances))
            }
            _ => None,
        }
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        mixture_log_terms(&self.weights, &self.means, &self.variances, x).1
    }

    /// Single-component forms draw only normals, so samples at different
    /// mean shifts share their noise under a common seed.
    pub fn sample_one(&self, rng: &mut Rng) -> Vec<f64> {
        let k = if self.weights.len() == 1 {
            0
        } else {
            let u = rng.uniform();
            let mut acc = 0.0;
            let mut chosen = self.weights.len() - 1;
            for (i, w) in self.weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    chosen = i;
                    break;
                }
            }
            chosen
        };
        let sd = self.variances[k].sqrt();
        self.means[k].iter().map(|m| m + sd * rng.normal()).collect()
    }
}

/// A score model paired with an exact sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplableDistribution {
    model: ScoreModel,
    form: MixtureForm,
}

impl SamplableDistribution {
    pub fn new(model: ScoreModel) -> Result<Self> {
        let form = MixtureForm::resolve(&model)
            .ok_or_else(|| Error::NotSamplable(format!("{} has no exact sampler", model.kind_name())))?;
        Ok(SamplableDistribution { model, form })
    }

    pub fn standard_gaussian(d: usize) -> Self {
        Self::new(ScoreModel::standard_gaussian(d)).expect("gaussian is samplable")
    }

    pub fn gaussian(mean: Vec<f64>, variance: f64) -> Result<Self> {
        Self::new(ScoreModel::gaussian(mean, variance)?)
    }

    pub fn model(&self) -> &ScoreModel {
        &self.model
    }

    pub fn form(&self) -> &MixtureForm {
        &self.form
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn score(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.model.score(x)
    }

    pub fn sample(&self, n: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
        (0..n).map(|_| self.form.sample_one(rng)).collect()
    }

    pub fn log_density_up_to_constant(&self, x: &[f64]) -> Result<f64> {
        self.model.log_density_up_to_constant(x)
    }

    /// Exact normalized log-density.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        super::check_dim(self.dim(), x)?;
        Ok(self.form.log_density(x))
    }

    /// Density ratio `self(x) / other(x)`.
    pub fn density_ratio(&self, other: &SamplableDistribution, x: &[f64]) -> Result<f64> {
        Ok((self.log_density(x)? - other.log_density(x)?).exp())
    }
}

/// Self-normalized importance weights for `q_ε ∝ p e^{εh}` from `p`-samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceWeights {
    /// Sum to one.
    pub weights: Vec<f64>,
    /// Effective sample size `1 / Σ w²`.
    pub ess: f64,
}

impl ImportanceWeights {
    pub fn expectation(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }
}

/// Fails when the effective sample size drops below `min_ess_fraction · n`.
pub fn tilt_importance_weights(
    samples: &[Vec<f64>],
    potential: &Potential,
    strength: f64,
    min_ess_fraction: f64,
) -> Result<ImportanceWeights> {
    if samples.is_empty() {
        return Err(Error::InsufficientSamples { required: 1, got: 0 });
    }
    let logw = samples
        .iter()
        .map(|x| potential.value(x).map(|h| strength * h))
        .collect::<Result<Vec<f64>>>()?;
    let mx = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|l| (l - mx).exp()).collect();
    let s: f64 = w.iter().sum();
    let weights: Vec<f64> = w.into_iter().map(|v| v / s).collect();
    let ess = 1.0 / weights.iter().map(|v| v * v).sum::<f64>();
    let required = min_ess_fraction * samples.len() as f64;
    if ess < required {
        return Err(Error::LowEffectiveSampleSize { ess, required });
    }
    Ok(ImportanceWeights { weights, ess })
}
