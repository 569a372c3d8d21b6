//! Numerical plumbing shared by every other module.

mod linalg;
mod rng;
mod stats;

pub use linalg::{add_scaled, dot, norm_inf, norm_sq, Matrix};
pub use rng::Rng;
pub use stats::{covariance, empirical_quantile, mean_and_stderr, sample_variance, MeanStderr};
