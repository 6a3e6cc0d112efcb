//! Nadaraya–Watson regression with product kernels.

use serde::{Deserialize, Serialize};

use crate::dgp::Dataset;
use crate::error::{config_err, Result};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelFamily {
    GaussianProduct,
    EpanechnikovProduct,
    /// Gaussian times a Hermite polynomial so that moments 1..order-1 vanish.
    HigherOrderGaussianProduct {
        order: u32,
    },
}

impl KernelFamily {
    /// Smoothness order `s`.
    pub fn order(&self) -> u32 {
        match *self {
            KernelFamily::GaussianProduct | KernelFamily::EpanechnikovProduct => 2,
            KernelFamily::HigherOrderGaussianProduct { order } => order,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let KernelFamily::HigherOrderGaussianProduct { order } = *self {
            if order < 2 || order % 2 != 0 {
                return config_err(format!("kernel order must be even and >= 2, got {order}"));
            }
        }
        Ok(())
    }

    /// Univariate kernel `k(u)`; the product kernel is `K(u) = Π k(u_j)`.
    pub fn univariate(&self, u: f64) -> f64 {
        match *self {
            KernelFamily::GaussianProduct => FRAC_1_SQRT_2PI * (-0.5 * u * u).exp(),
            KernelFamily::EpanechnikovProduct => {
                if u.abs() <= 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
            KernelFamily::HigherOrderGaussianProduct { order } => {
                FRAC_1_SQRT_2PI * (-0.5 * u * u).exp() * hermite_correction(order, u)
            }
        }
    }

    /// Product kernel at a `d`-vector.
    pub fn eval(&self, u: &[f64]) -> f64 {
        match *self {
            KernelFamily::GaussianProduct => {
                let q: f64 = u.iter().map(|v| v * v).sum();
                FRAC_1_SQRT_2PI.powi(u.len() as i32) * (-0.5 * q).exp()
            }
            _ => u.iter().map(|&v| self.univariate(v)).product(),
        }
    }

    /// Radius outside of which the univariate kernel is zero or negligible
    /// (below 1e-17 relative to its peak).
    pub fn effective_radius(&self) -> f64 {
        match *self {
            KernelFamily::EpanechnikovProduct => 1.0,
            KernelFamily::GaussianProduct => 9.0,
            KernelFamily::HigherOrderGaussianProduct { order } => 9.0 + 0.5 * order as f64,
        }
    }
}

/// `Σ_{k < s/2} (−1)^k / (2^k k!) He_{2k}(u)`.
fn hermite_correction(order: u32, u: f64) -> f64 {
    let terms = (order / 2) as usize;
    // He_0, He_1, ... up to He_{2(terms-1)}
    let mut he_prev = 1.0;
    let mut he = u;
    let mut total = 1.0;
    let mut coef = 1.0;
    let mut n = 1usize;
    for k in 1..terms {
        // advance to He_{2k}
        while n < 2 * k {
            let next = u * he - n as f64 * he_prev;
            he_prev = he;
            he = next;
            n += 1;
        }
        coef *= -1.0 / (2.0 * k as f64);
        total += coef * he;
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Bandwidth {
    Fixed {
        value: f64,
    },
    /// `b_n = c·n^{-exponent}`; the exponent defaults to `1/(2s+1)` and is
    /// multiplied by 1.1 when `undersmooth` is set.
    Rule {
        c: f64,
        #[serde(default)]
        exponent: Option<f64>,
        #[serde(default)]
        undersmooth: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub bandwidth: Bandwidth,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            family: KernelFamily::GaussianProduct,
            bandwidth: Bandwidth::Rule {
                c: DEFAULT_BANDWIDTH_CONSTANT,
                exponent: None,
                undersmooth: false,
            },
        }
    }
}

/// Constant in the default bandwidth rule.
pub const DEFAULT_BANDWIDTH_CONSTANT: f64 = 1.0;

impl KernelSpec {
    pub fn resolve_bandwidth(&self, n: usize) -> Result<f64> {
        self.family.validate()?;
        let b = match self.bandwidth {
            Bandwidth::Fixed { value } => value,
            Bandwidth::Rule {
                c,
                exponent,
                undersmooth,
            } => {
                let s = self.family.order() as f64;
                let mut e = exponent.unwrap_or(1.0 / (2.0 * s + 1.0));
                if undersmooth {
                    e *= 1.1;
                }
                c * (n as f64).powf(-e)
            }
        };
        if !(b > 0.0) || !b.is_finite() {
            return config_err(format!("bandwidth must be positive, got {b}"));
        }
        Ok(b)
    }
}

/// Fitted Nadaraya–Watson smoother. Holds the training sample.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelRegressor {
    pub family: KernelFamily,
    pub bandwidth: f64,
    pub(crate) x: Vec<f64>,
    pub(crate) y: Vec<f64>,
    pub(crate) dim: usize,
    pub(crate) global_mean: f64,
}

/// A raw kernel prediction with its fallback flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelPrediction {
    pub value: f64,
    /// The weight denominator underflowed and the global mean was returned.
    pub fallback: bool,
}

pub fn fit_kernel(data: &Dataset, spec: &KernelSpec) -> Result<KernelRegressor> {
    if data.n() == 0 {
        return config_err("kernel regression needs at least one observation");
    }
    let bandwidth = spec.resolve_bandwidth(data.n())?;
    let global_mean = data.y_centered.iter().sum::<f64>() / data.n() as f64;
    Ok(KernelRegressor {
        family: spec.family,
        bandwidth,
        x: data.x.clone(),
        y: data.y_centered.clone(),
        dim: data.width(),
        global_mean,
    })
}

impl KernelRegressor {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_train(&self) -> usize {
        self.y.len()
    }

    /// Rebuild from a dump plus the referenced training data.
    pub fn from_parts(family: KernelFamily, bandwidth: f64, data: &Dataset) -> Self {
        let global_mean = data.y_centered.iter().sum::<f64>() / data.n().max(1) as f64;
        Self {
            family,
            bandwidth,
            x: data.x.clone(),
            y: data.y_centered.clone(),
            dim: data.width(),
            global_mean,
        }
    }

    /// Normalized weights `K((X_i − x)/b) / Σ K(...)`, or `None` when the
    /// denominator underflows.
    pub fn weights(&self, x: &[f64]) -> Option<Vec<f64>> {
        let raw: Vec<f64> = (0..self.n_train()).map(|i| self.raw_weight(i, x)).collect();
        let total: f64 = raw.iter().sum();
        (total > f64::MIN_POSITIVE).then(|| raw.into_iter().map(|w| w / total).collect())
    }

    #[inline]
    fn raw_weight(&self, i: usize, x: &[f64]) -> f64 {
        let row = &self.x[i * self.dim..(i + 1) * self.dim];
        let inv_b = 1.0 / self.bandwidth;
        match self.family {
            // constants cancel in the ratio
            KernelFamily::GaussianProduct => {
                let q: f64 = row
                    .iter()
                    .zip(x)
                    .map(|(a, b)| {
                        let u = (a - b) * inv_b;
                        u * u
                    })
                    .sum();
                if q > 1400.0 {
                    0.0
                } else {
                    (-0.5 * q).exp()
                }
            }
            family => row
                .iter()
                .zip(x)
                .map(|(a, b)| family.univariate((a - b) * inv_b))
                .product(),
        }
    }

    pub fn predict_raw(&self, x: &[f64]) -> KernelPrediction {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..self.n_train() {
            let w = self.raw_weight(i, x);
            num += w * self.y[i];
            den += w;
        }
        if den > f64::MIN_POSITIVE {
            KernelPrediction {
                value: num / den,
                fallback: false,
            }
        } else {
            KernelPrediction {
                value: self.global_mean,
                fallback: true,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn integrate_1d(f: impl Fn(f64) -> f64, lo: f64, hi: f64, steps: usize) -> f64 {
        // composite Simpson
        let h = (hi - lo) / steps as f64;
        let mut s = f(lo) + f(hi);
        for k in 1..steps {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(lo + k as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn univariate_kernels_integrate_to_one_with_vanishing_moments() {
        for family in [
            KernelFamily::GaussianProduct,
            KernelFamily::EpanechnikovProduct,
            KernelFamily::HigherOrderGaussianProduct { order: 4 },
            KernelFamily::HigherOrderGaussianProduct { order: 6 },
        ] {
            let r = family.effective_radius();
            let s = family.order();
            let m0 = integrate_1d(|u| family.univariate(u), -r, r, 20000);
            assert!((m0 - 1.0).abs() < 1e-8, "{family:?}: {m0}");
            for j in 1..s {
                let mj = integrate_1d(|u| u.powi(j as i32) * family.univariate(u), -r, r, 20000);
                assert!(mj.abs() < 1e-8, "{family:?} moment {j}: {mj}");
            }
            let ms = integrate_1d(|u| u.powi(s as i32) * family.univariate(u), -r, r, 20000);
            assert!(ms.abs() > 1e-3, "{family:?}: kappa_s = {ms}");
        }
    }

    #[test]
    fn fourth_order_matches_closed_form() {
        let k = KernelFamily::HigherOrderGaussianProduct { order: 4 };
        for u in [-2.0, -0.5, 0.0, 1.3] {
            let expected = 0.5 * (3.0 - u * u) * FRAC_1_SQRT_2PI * (-0.5 * u * u).exp();
            assert!((k.univariate(u) - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn odd_order_rejected() {
        let spec = KernelSpec {
            family: KernelFamily::HigherOrderGaussianProduct { order: 3 },
            bandwidth: Bandwidth::Fixed { value: 0.5 },
        };
        assert!(spec.resolve_bandwidth(100).is_err());
    }

    #[test]
    fn bandwidth_rule() {
        let spec = KernelSpec {
            family: KernelFamily::GaussianProduct,
            bandwidth: Bandwidth::Rule {
                c: 2.0,
                exponent: None,
                undersmooth: false,
            },
        };
        let b = spec.resolve_bandwidth(1000).unwrap();
        assert!((b - 2.0 * 1000f64.powf(-0.2)).abs() < 1e-14);
        let under = KernelSpec {
            bandwidth: Bandwidth::Rule {
                c: 2.0,
                exponent: None,
                undersmooth: true,
            },
            ..spec
        };
        assert!(under.resolve_bandwidth(1000).unwrap() < b);
        let bad = KernelSpec {
            bandwidth: Bandwidth::Fixed { value: 0.0 },
            ..spec
        };
        assert!(bad.resolve_bandwidth(10).is_err());
    }
}
