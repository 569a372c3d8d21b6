use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{dot, mean_and_stderr, norm_inf, Rng};
use crate::predictors::Predictor;

/// Hessian-vector products for the Hutchinson probes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum HvpMethod {
    /// `(∇f(x + ηv) − ∇f(x − ηv)) / 2η`, default `η = 1e-4 · (1 + ‖x‖∞)`.
    CentralDifference { step: Option<f64> },
    /// `H v` from the exact input Hessian.
    Exact,
}

impl Default for HvpMethod {
    fn default() -> Self {
        HvpMethod::CentralDifference { step: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HutchinsonEstimate {
    pub estimate: f64,
    /// `vᵀHv` per Rademacher probe.
    pub probe_values: Vec<f64>,
}

impl HutchinsonEstimate {
    /// Standard error across probes; `None` for a single probe.
    pub fn stderr(&self) -> Option<f64> {
        mean_and_stderr(&self.probe_values).ok().map(|m| m.stderr)
    }
}

/// Mean of `vᵀ H v` over `probes` Rademacher vectors.
pub fn hutchinson_laplacian(
    pred: &dyn Predictor,
    x: &[f64],
    probes: usize,
    hvp: HvpMethod,
    rng: &mut Rng,
) -> Result<HutchinsonEstimate> {
    if probes < 1 {
        return Err(Error::InvalidArgument("hutchinson needs at least one probe".into()));
    }
    pred.check_dim(x)?;
    let d = x.len();
    let hessian = match hvp {
        HvpMethod::Exact => Some(pred.hessian(x)?),
        HvpMethod::CentralDifference { .. } => None,
    };
    let eta = match hvp {
        HvpMethod::CentralDifference { step: Some(s) } => s,
        _ => 1e-4 * (1.0 + norm_inf(x)),
    };
    let mut probe_values = Vec::with_capacity(probes);
    for _ in 0..probes {
        let v = rng.rademacher_vec(d);
        let value = match &hessian {
            Some(h) => h.quadratic_form(&v)?,
            None => {
                let plus: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + eta * b).collect();
                let minus: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a - eta * b).collect();
                let gp = pred.gradient(&plus)?;
                let gm = pred.gradient(&minus)?;
                let hv: Vec<f64> = gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * eta)).collect();
                dot(&v, &hv)
            }
        };
        probe_values.push(value);
    }
    let estimate = probe_values.iter().sum::<f64>() / probes as f64;
    Ok(HutchinsonEstimate { estimate, probe_values })
}
