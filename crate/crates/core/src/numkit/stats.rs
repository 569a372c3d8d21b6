use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sample mean with its standard error (`sample std / sqrt(n)`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStderr {
    pub mean: f64,
    pub stderr: f64,
}

fn check_finite(samples: &[f64]) -> Result<()> {
    if samples.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

pub fn mean_and_stderr(samples: &[f64]) -> Result<MeanStderr> {
    if samples.len() < 2 {
        return Err(Error::InsufficientSamples { required: 2, got: samples.len() });
    }
    check_finite(samples)?;
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(MeanStderr { mean, stderr: (var / n).sqrt() })
}

/// Unbiased sample variance.
pub fn sample_variance(samples: &[f64]) -> Result<f64> {
    covariance(samples, samples)
}

/// Unbiased sample covariance (divisor `n - 1`).
pub fn covariance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    if a.len() < 2 {
        return Err(Error::InsufficientSamples { required: 2, got: a.len() });
    }
    check_finite(a)?;
    check_finite(b)?;
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let s: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    Ok(s / (n - 1.0))
}

/// Lower order statistic at index `ceil(level * n) - 1` of the ascending sort.
pub fn empirical_quantile(samples: &[f64], level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidLevel(level));
    }
    if samples.is_empty() {
        return Err(Error::InsufficientSamples { required: 1, got: 0 });
    }
    check_finite(samples)?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // levels are decimal fractions; 0.07 · 100 must not ceil to 8
    let t = level * n as f64;
    let t = if (t - t.round()).abs() <= 1e-9 * t.max(1.0) { t.round() } else { t.ceil() };
    let idx = (t as usize).clamp(1, n) - 1;
    Ok(sorted[idx])
}
