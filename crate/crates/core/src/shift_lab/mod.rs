//! Shift families and numerical checks of the identities, expansions and
//! bounds that tie the Stein functional to distribution shift.

mod checks;
mod sweeps;
mod tilt;

pub use checks::{directional_decomposition_check, fisher_bound_check, projection_identity_check};
pub use sweeps::{
    antithetic_gaussian, blindspot_closed_form, blindspot_sweep, rotation_sweep, BlindspotRow, RotationSweep, SweepRow,
};
pub use tilt::{
    tilt_slope_check, tilt_variance_check, TiltMode, TiltSlopeReport, TiltSlopeRow, DEFAULT_EPSILON_GRID, MIN_ESS_FRACTION,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{MeanStderr, Rng};
use crate::score_models::{Potential, SamplableDistribution, ScoreModel};

/// Unit vector `(1,1)/√2`, the default base direction of the rotation family.
pub fn diagonal_direction() -> Vec<f64> {
    vec![std::f64::consts::FRAC_1_SQRT_2; 2]
}

pub fn rotate(v: &[f64], angle: f64) -> Vec<f64> {
    let (s, c) = angle.sin_cos();
    vec![c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ShiftFamily {
    /// `q = N(ε R_φ u, I₂)`
    Rotation { epsilon: f64, direction: Vec<f64>, angle: f64 },
    /// Every component of the base translated by `shift`.
    MeanShift { shift: Vec<f64> },
    /// `q ∝ p e^{ε h}`
    Tilt { potential: Potential, strength: f64 },
    /// `(1 − β) in + β out`
    Mixture { in_dist: SamplableDistribution, out_dist: SamplableDistribution, out_fraction: f64 },
}

fn from_parts(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<f64>) -> Result<SamplableDistribution> {
    if weights.len() == 1 {
        SamplableDistribution::gaussian(means[0].clone(), variances[0])
    } else {
        SamplableDistribution::new(ScoreModel::mixture(weights, means, variances)?)
    }
}

impl ShiftFamily {
    /// The shifted distribution `q`; `base` is ignored by the rotation and
    /// mixture families, which carry their own reference.
    pub fn resolve(&self, base: &SamplableDistribution) -> Result<SamplableDistribution> {
        match self {
            ShiftFamily::Rotation { epsilon, direction, angle } => {
                if direction.len() != 2 {
                    return Err(Error::DimensionMismatch { expected: 2, got: direction.len() });
                }
                let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
                if (norm - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidArgument("rotation direction must be a unit vector".into()));
                }
                let mean = rotate(direction, *angle).into_iter().map(|v| epsilon * v).collect();
                SamplableDistribution::gaussian(mean, 1.0)
            }
            ShiftFamily::MeanShift { shift } => {
                crate::score_models::check_dim(base.dim(), shift)?;
                let f = base.form();
                let means = f.means.iter().map(|m| m.iter().zip(shift).map(|(a, b)| a + b).collect()).collect();
                from_parts(f.weights.clone(), means, f.variances.clone())
            }
            ShiftFamily::Tilt { potential, strength } => {
                SamplableDistribution::new(ScoreModel::tilted(base.model().clone(), potential.clone(), *strength)?)
            }
            ShiftFamily::Mixture { in_dist, out_dist, out_fraction } => {
                let b = *out_fraction;
                if !(0.0..=1.0).contains(&b) {
                    return Err(Error::InvalidArgument(format!("out-fraction {b} outside [0, 1]")));
                }
                if in_dist.dim() != out_dist.dim() {
                    return Err(Error::DimensionMismatch { expected: in_dist.dim(), got: out_dist.dim() });
                }
                if b == 0.0 {
                    return Ok(in_dist.clone());
                }
                if b == 1.0 {
                    return Ok(out_dist.clone());
                }
                let (fi, fo) = (in_dist.form(), out_dist.form());
                let weights = fi.weights.iter().map(|w| (1.0 - b) * w).chain(fo.weights.iter().map(|w| b * w)).collect();
                let means = fi.means.iter().chain(&fo.means).cloned().collect();
                let variances = fi.variances.iter().chain(&fo.variances).cloned().collect();
                from_parts(weights, means, variances)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    /// `lhs = rhs`; discrepancy is `|lhs − rhs| / combined_stderr`.
    Equality,
    /// `lhs ≤ rhs`; discrepancy is `(lhs − rhs) / combined_stderr` (negative = slack).
    UpperBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub name: String,
    pub value: f64,
    pub stderr: f64,
}

impl Term {
    fn new(name: &str, m: MeanStderr) -> Self {
        Term { name: name.to_string(), value: m.mean, stderr: m.stderr }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheckReport {
    pub name: String,
    pub relation: Relation,
    pub lhs: f64,
    pub lhs_stderr: f64,
    pub rhs: f64,
    /// Zero for closed-form right-hand sides.
    pub rhs_stderr: f64,
    /// Standard error of `lhs − rhs`; smaller than the root-sum-square of the
    /// two stderrs when both sides share samples.
    pub combined_stderr: f64,
    pub discrepancy: f64,
    pub n: usize,
    pub seed: u64,
    pub terms: Vec<Term>,
}

impl IdentityCheckReport {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        relation: Relation,
        lhs: MeanStderr,
        rhs: MeanStderr,
        combined_stderr: f64,
        n: usize,
        seed: u64,
        terms: Vec<Term>,
    ) -> Self {
        let mut r = IdentityCheckReport {
            name: name.to_string(),
            relation,
            lhs: lhs.mean,
            lhs_stderr: lhs.stderr,
            rhs: rhs.mean,
            rhs_stderr: rhs.stderr,
            combined_stderr,
            discrepancy: 0.0,
            n,
            seed,
            terms,
        };
        r.discrepancy = r.recompute_discrepancy();
        r
    }

    pub fn recompute_discrepancy(&self) -> f64 {
        let gap = match self.relation {
            Relation::Equality => (self.lhs - self.rhs).abs(),
            Relation::UpperBound => self.lhs - self.rhs,
        };
        if self.combined_stderr > 0.0 {
            gap / self.combined_stderr
        } else if gap.abs() <= 1e-12 * (1.0 + self.lhs.abs().max(self.rhs.abs())) {
            // both sides exact and equal to rounding
            0.0
        } else {
            gap.signum() * f64::MAX
        }
    }

    /// Holds within `k` combined standard errors.
    pub fn holds_within(&self, k: f64) -> bool {
        self.discrepancy <= k
    }

    pub fn term(&self, name: &str) -> Option<&Term> {
        self.terms.iter().find(|t| t.name == name)
    }
}

/// Labeled sample set; `is_out[i]` marks out-of-distribution members.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSamples {
    pub points: Vec<Vec<f64>>,
    pub is_out: Vec<bool>,
}

impl LabeledSamples {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn n_out(&self) -> usize {
        self.is_out.iter().filter(|b| **b).count()
    }
}

/// Exactly `round(β̄ n)` out-of-distribution points, shuffled with the rest.
pub fn mixture_build(
    in_dist: &SamplableDistribution,
    out_dist: &SamplableDistribution,
    out_fraction: f64,
    n: usize,
    rng: &mut Rng,
) -> Result<LabeledSamples> {
    if !(0.0..=1.0).contains(&out_fraction) {
        return Err(Error::InvalidArgument(format!("out-fraction {out_fraction} outside [0, 1]")));
    }
    if in_dist.dim() != out_dist.dim() {
        return Err(Error::DimensionMismatch { expected: in_dist.dim(), got: out_dist.dim() });
    }
    let n_out = (out_fraction * n as f64).round() as usize;
    let mut items: Vec<(Vec<f64>, bool)> = in_dist
        .sample(n - n_out, rng)
        .into_iter()
        .map(|x| (x, false))
        .chain(out_dist.sample(n_out, rng).into_iter().map(|x| (x, true)))
        .collect();
    rng.shuffle(&mut items);
    let (points, is_out) = items.into_iter().unzip();
    Ok(LabeledSamples { points, is_out })
}

/// Evaluates `f` on every point in parallel, preserving order.
pub(crate) fn par_eval<F>(xs: &[Vec<f64>], f: F) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    xs.par_iter().map(|x| f(x)).collect()
}

pub(crate) fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InsufficientSamples { required: 2, got: n });
    }
    Ok(())
}
