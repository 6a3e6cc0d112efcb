//! Kernel ridge regression with the polynomial kernel `(γ·x'x̃ + 1)^p`.
//!
//! The polynomial kernel has a finite feature map, so the fit is solved in
//! the primal: `φ(x)'(Φ'Φ + αI)⁻¹Φ'y`, which equals the dual solution.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dgp::Dataset;
use crate::error::{config_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelRidgeSpec {
    pub alpha: f64,
    pub gamma: f64,
    pub degree: u32,
}

impl Default for KernelRidgeSpec {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            gamma: 1e-4,
            degree: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelRidgeRegressor {
    pub spec: KernelRidgeSpec,
    pub dim: usize,
    pub weights: Vec<f64>,
}

/// Multi-indices `α` with `|α| ≤ degree` and their feature scales
/// `√(C(p,|α|)·γ^{|α|}·|α|!/α!)`.
fn monomials(dim: usize, degree: u32, gamma: f64) -> Vec<(Vec<u32>, f64)> {
    fn fact(k: u32) -> f64 {
        (1..=k).map(f64::from).product()
    }
    let mut out = Vec::new();
    let mut alpha = vec![0u32; dim];
    fn rec(
        pos: usize,
        remaining: u32,
        alpha: &mut Vec<u32>,
        out: &mut Vec<Vec<u32>>,
    ) {
        if pos == alpha.len() {
            out.push(alpha.clone());
            return;
        }
        for a in 0..=remaining {
            alpha[pos] = a;
            rec(pos + 1, remaining - a, alpha, out);
        }
        alpha[pos] = 0;
    }
    let mut all = Vec::new();
    rec(0, degree, &mut alpha, &mut all);
    for a in all {
        let k: u32 = a.iter().sum();
        let binom = fact(degree) / (fact(k) * fact(degree - k));
        let multinom = fact(k) / a.iter().map(|&ai| fact(ai)).product::<f64>();
        let scale = (binom * gamma.powi(k as i32) * multinom).sqrt();
        out.push((a, scale));
    }
    out
}

fn features(monos: &[(Vec<u32>, f64)], x: &[f64]) -> Vec<f64> {
    monos
        .iter()
        .map(|(a, s)| s * a.iter().zip(x).map(|(&p, &v)| v.powi(p as i32)).product::<f64>())
        .collect()
}

pub fn fit_kernel_ridge(data: &Dataset, spec: &KernelRidgeSpec) -> Result<KernelRidgeRegressor> {
    if !(spec.alpha > 0.0) || !(spec.gamma > 0.0) || spec.degree == 0 {
        return config_err("kernel ridge needs alpha > 0, gamma > 0, degree >= 1");
    }
    let dim = data.width();
    let monos = monomials(dim, spec.degree, spec.gamma);
    let m = monos.len();
    let mut gram = DMatrix::<f64>::zeros(m, m);
    let mut rhs = DVector::<f64>::zeros(m);
    for i in 0..data.n() {
        let f = features(&monos, data.block(i));
        for a in 0..m {
            rhs[a] += f[a] * data.y_centered[i];
            for b in 0..=a {
                gram[(a, b)] += f[a] * f[b];
            }
        }
    }
    for a in 0..m {
        for b in 0..a {
            gram[(b, a)] = gram[(a, b)];
        }
        gram[(a, a)] += spec.alpha;
    }
    let chol = gram
        .cholesky()
        .ok_or_else(|| crate::error::RmsError::Config("kernel ridge system not positive definite".into()))?;
    let w = chol.solve(&rhs);
    Ok(KernelRidgeRegressor {
        spec: *spec,
        dim,
        weights: w.iter().copied().collect(),
    })
}

impl KernelRidgeRegressor {
    pub fn predict_raw(&self, x: &[f64]) -> f64 {
        let monos = monomials(self.dim, self.spec.degree, self.spec.gamma);
        features(&monos, x)
            .iter()
            .zip(&self.weights)
            .map(|(f, w)| f * w)
            .sum()
    }
}
