//! Task-aware out-of-distribution diagnostics built on the Langevin Stein
//! operator `L_p f(x) = Δf(x) + ∇log p(x)·∇f(x)` applied to a fixed predictor `f`.
//!
//! The crate is organised bottom-up:
//!
//! - [`numkit`]: seeded randomness, small dense linear algebra, descriptive statistics.
//! - [`score_models`]: exact and learned score fields, shift potentials, samplers.
//! - [`predictors`]: feed-forward predictors with exact input derivatives and training.
//! - [`stein_core`]: Stein operator values, Hutchinson traces, batched adjusted residuals.
//! - [`shift_lab`]: shift families and numerical checks of the shift identities.
//! - [`detector`]: calibrated thresholds, AUROC, FPR at 95% TPR, power curves.

pub mod detector;
pub mod error;
pub mod numkit;
pub mod predictors;
pub mod score_models;
pub mod shift_lab;
pub mod stein_core;

pub use error::{Error, Result};
