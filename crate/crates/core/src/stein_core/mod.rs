//! Langevin Stein operator `L_p f(x) = Δf(x) + s_p(x)·∇f(x)` and its
//! first-order relative `A_p f(x) = ∇f(x) + f(x) s_p(x)`.

mod hutchinson;
mod residuals;

pub use hutchinson::{hutchinson_laplacian, HutchinsonEstimate, HvpMethod};
pub use residuals::{
    batch_adjusted_residuals, first_order_l2_corrected, raw_stein_values, taste_functional_estimate, BatchOptions,
    CalibrationBaseline, L2Statistic, PerDimensionResiduals, Provenance, ResidualBatch, TasteEstimate,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{dot, Rng};
use crate::predictors::{input_hessian_diagonal, input_laplacian_exact, Predictor};
use crate::score_models::ScoreModel;

/// How the Laplacian term is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum LaplacianRoute {
    Exact,
    /// Closed-form softmax Hessian over first-order logit gradients.
    SoftmaxShortcut { top_k: Option<usize> },
    Hutchinson { probes: usize },
    /// Drop the Laplacian (regression heads on piecewise-affine backbones).
    Omitted,
}

impl fmt::Display for LaplacianRoute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LaplacianRoute::Exact => write!(f, "exact"),
            LaplacianRoute::SoftmaxShortcut { top_k: None } => write!(f, "shortcut"),
            LaplacianRoute::SoftmaxShortcut { top_k: Some(k) } => write!(f, "shortcut:{k}"),
            LaplacianRoute::Hutchinson { probes } => write!(f, "hutchinson:{probes}"),
            LaplacianRoute::Omitted => write!(f, "omit"),
        }
    }
}

impl FromStr for LaplacianRoute {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("unknown laplacian route '{s}'"));
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a.parse::<usize>().map_err(|_| bad())?)),
            None => (s, None),
        };
        match (name, arg) {
            ("exact", None) => Ok(LaplacianRoute::Exact),
            ("omit", None) => Ok(LaplacianRoute::Omitted),
            ("shortcut", top_k) => Ok(LaplacianRoute::SoftmaxShortcut { top_k }),
            ("hutchinson", Some(k)) if k >= 1 => Ok(LaplacianRoute::Hutchinson { probes: k }),
            _ => Err(bad()),
        }
    }
}

impl From<LaplacianRoute> for String {
    fn from(r: LaplacianRoute) -> String {
        r.to_string()
    }
}

impl TryFrom<String> for LaplacianRoute {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

fn check_score(pred: &dyn Predictor, score: &ScoreModel) -> Result<()> {
    if pred.input_dim() != score.dim() {
        return Err(Error::DimensionMismatch { expected: pred.input_dim(), got: score.dim() });
    }
    Ok(())
}

pub fn laplacian(pred: &dyn Predictor, x: &[f64], route: LaplacianRoute, hvp: HvpMethod, rng: &mut Rng) -> Result<f64> {
    match route {
        LaplacianRoute::Exact => input_laplacian_exact(pred, x),
        LaplacianRoute::SoftmaxShortcut { top_k } => pred.laplacian_softmax_shortcut(x, top_k),
        LaplacianRoute::Hutchinson { probes } => Ok(hutchinson_laplacian(pred, x, probes, hvp, rng)?.estimate),
        LaplacianRoute::Omitted => Ok(0.0),
    }
}

/// `L_p f(x)` with the Laplacian from `route`. `rng` is only drawn from on
/// the Hutchinson route.
pub fn langevin_apply(
    pred: &dyn Predictor,
    score: &ScoreModel,
    x: &[f64],
    route: LaplacianRoute,
    rng: &mut Rng,
) -> Result<f64> {
    langevin_apply_with(pred, score, x, route, HvpMethod::default(), rng)
}

pub fn langevin_apply_with(
    pred: &dyn Predictor,
    score: &ScoreModel,
    x: &[f64],
    route: LaplacianRoute,
    hvp: HvpMethod,
    rng: &mut Rng,
) -> Result<f64> {
    check_score(pred, score)?;
    let lap = laplacian(pred, x, route, hvp, rng)?;
    Ok(lap + dot(&score.score(x)?, &pred.gradient(x)?))
}

/// `r_{f,i}(x) = ∂_ii f(x) + s_i(x) ∂_i f(x)`; sums to the exact-route residual.
pub fn per_dimension_residuals(pred: &dyn Predictor, score: &ScoreModel, x: &[f64]) -> Result<Vec<f64>> {
    check_score(pred, score)?;
    let diag = input_hessian_diagonal(pred, x)?;
    let s = score.score(x)?;
    let g = pred.gradient(x)?;
    Ok(diag.iter().zip(&s).zip(&g).map(|((h, si), gi)| h + si * gi).collect())
}

/// `A_p f(x) = ∇f(x) + f(x) s_p(x)`
pub fn first_order_apply(pred: &dyn Predictor, score: &ScoreModel, x: &[f64]) -> Result<Vec<f64>> {
    check_score(pred, score)?;
    let f = pred.value(x)?;
    let mut g = pred.gradient(x)?;
    crate::numkit::add_scaled(&mut g, f, &score.score(x)?);
    Ok(g)
}

/// `A^v_p f(x) = vᵀ∇f(x) + f(x) vᵀs_p(x)`
pub fn first_order_projected(pred: &dyn Predictor, score: &ScoreModel, x: &[f64], v: &[f64]) -> Result<f64> {
    if v.iter().all(|c| *c == 0.0) {
        return Err(Error::InvalidArgument("projection direction must be non-zero".into()));
    }
    crate::score_models::check_dim(pred.input_dim(), v)?;
    Ok(dot(v, &first_order_apply(pred, score, x)?))
}
