use serde::{Deserialize, Serialize};

use crate::direction::{dot, Direction};
use crate::error::{config_err, Result, RmsError};

/// Spread of a set of estimates around `θ₀`, per coordinate and overall.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub replications: usize,
    pub mse: Vec<f64>,
    pub bias: Vec<f64>,
    /// Sample SD with the `B − 1` denominator; zero when `B = 1`.
    pub sd: Vec<f64>,
    /// `false` when there is a single estimate.
    pub sd_defined: bool,
    /// Mean absolute coordinate error.
    pub l1_error: Vec<f64>,
    pub l2_norm_bias: f64,
    /// Mean of `1 − θ̂'θ₀`.
    pub one_minus_mean_ang: f64,
    /// Median of `1 − θ̂'θ₀`.
    pub one_minus_median_ang: f64,
}

pub fn compute_metrics(estimates: &[Direction], theta0: &Direction) -> Result<Metrics> {
    let b = estimates.len();
    if b == 0 {
        return config_err("metrics need at least one estimate");
    }
    let d = theta0.dim();
    if let Some(bad) = estimates.iter().find(|t| t.dim() != d) {
        return Err(RmsError::DimensionMismatch {
            expected: d,
            got: bad.dim(),
        });
    }
    let bf = b as f64;
    let mut mse = vec![0.0; d];
    let mut bias = vec![0.0; d];
    let mut l1_error = vec![0.0; d];
    let mut sd = vec![0.0; d];
    for k in 0..d {
        let mean = estimates.iter().map(|t| t[k]).sum::<f64>() / bf;
        bias[k] = mean - theta0[k];
        mse[k] = estimates.iter().map(|t| (t[k] - theta0[k]).powi(2)).sum::<f64>() / bf;
        l1_error[k] = estimates.iter().map(|t| (t[k] - theta0[k]).abs()).sum::<f64>() / bf;
        if b > 1 {
            let ss: f64 = estimates.iter().map(|t| (t[k] - mean).powi(2)).sum();
            sd[k] = (ss / (bf - 1.0)).sqrt();
        }
    }
    let mut ang: Vec<f64> = estimates.iter().map(|t| 1.0 - dot(t, theta0)).collect();
    let one_minus_mean_ang = ang.iter().sum::<f64>() / bf;
    ang.sort_by(f64::total_cmp);
    let one_minus_median_ang = if b % 2 == 1 {
        ang[b / 2]
    } else {
        0.5 * (ang[b / 2 - 1] + ang[b / 2])
    };
    Ok(Metrics {
        replications: b,
        l2_norm_bias: bias.iter().map(|v| v * v).sum::<f64>().sqrt(),
        mse,
        bias,
        sd,
        sd_defined: b > 1,
        l1_error,
        one_minus_mean_ang,
        one_minus_median_ang,
    })
}
