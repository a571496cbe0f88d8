//! Best achievable regression performance implied by a mutual information value.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerformanceBound {
    pub r2_max: f64,
    pub rmse_min: f64,
    pub mi_nats: f64,
    pub var_y: f64,
}

fn check_mi(mi_nats: f64) -> Result<()> {
    if mi_nats >= 0.0 && !mi_nats.is_nan() {
        Ok(())
    } else {
        Err(Error::NegativeMutualInformation(mi_nats))
    }
}

/// `1 - exp(-2 I)`.
pub fn achievable_r2(mi_nats: f64) -> Result<f64> {
    check_mi(mi_nats)?;
    Ok(-(-2.0 * mi_nats).exp_m1())
}

/// `exp(-I) * sqrt(var_y)`.
pub fn achievable_rmse(mi_nats: f64, var_y: f64) -> Result<f64> {
    check_mi(mi_nats)?;
    if !(var_y > 0.0) || !var_y.is_finite() {
        return Err(Error::InvalidVariance(var_y));
    }
    Ok((-mi_nats).exp() * var_y.sqrt())
}

impl PerformanceBound {
    pub fn new(mi_nats: f64, var_y: f64) -> Result<Self> {
        Ok(Self {
            r2_max: achievable_r2(mi_nats)?,
            rmse_min: achievable_rmse(mi_nats, var_y)?,
            mi_nats,
            var_y,
        })
    }
}

/// Unbiased sample variance.
pub fn sample_variance(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::TooFewRows {
            needed: 2,
            got: values.len(),
        });
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    Ok(values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0))
}
