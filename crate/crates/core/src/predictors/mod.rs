//! Predictors `f: ℝ^d → ℝ` with exact input gradients and Laplacians.

mod mlp;
mod quadratic;
mod softmax;
mod train;

pub use mlp::{Activation, ForwardCache, InputDerivatives, Layer, Mlp, MlpRecord};
pub use quadratic::QuadraticFunction;
pub use softmax::{softmax, softmax_hessian, ClassSelection, Head, MlpPredictor, PredictorCheckpoint};
pub use train::{dataset_loss, train, Dataset, LossKind, Optimizer, OptimizerConfig, TrainConfig, TrainOutcome};
pub(crate) use train::minimize;

use crate::error::{Error, Result};
use crate::numkit::Matrix;

/// Largest input dimension for which the full input Hessian is formed.
pub const MAX_EXACT_HESSIAN_DIM: usize = 64;

/// A scalar test function with exact first and second input derivatives.
pub trait Predictor: Send + Sync {
    fn input_dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> Result<f64>;

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// Exact input Hessian of the scalar output.
    fn hessian(&self, x: &[f64]) -> Result<Matrix>;

    /// Laplacian through first-order logit gradients and the closed-form
    /// softmax Hessian. Only piecewise-affine softmax classifiers support it.
    fn laplacian_softmax_shortcut(&self, _x: &[f64], _top_k: Option<usize>) -> Result<f64> {
        Err(Error::ShortcutRequiresPiecewiseAffine)
    }

    /// Short identifier recorded in residual provenance.
    fn id(&self) -> String;

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), got: x.len() });
        }
        Ok(())
    }
}

fn check_exact_dim(p: &dyn Predictor) -> Result<()> {
    let d = p.input_dim();
    if d > MAX_EXACT_HESSIAN_DIM {
        return Err(Error::UseHutchinson { dim: d, max: MAX_EXACT_HESSIAN_DIM });
    }
    Ok(())
}

/// Trace of the exact input Hessian.
pub fn input_laplacian_exact(p: &dyn Predictor, x: &[f64]) -> Result<f64> {
    check_exact_dim(p)?;
    Ok(p.hessian(x)?.trace())
}

/// Diagonal of the exact input Hessian (`∂_ii f`).
pub fn input_hessian_diagonal(p: &dyn Predictor, x: &[f64]) -> Result<Vec<f64>> {
    check_exact_dim(p)?;
    Ok(p.hessian(x)?.diagonal())
}

pub fn input_laplacian_softmax_shortcut(p: &dyn Predictor, x: &[f64], top_k: Option<usize>) -> Result<f64> {
    p.laplacian_softmax_shortcut(x, top_k)
}
