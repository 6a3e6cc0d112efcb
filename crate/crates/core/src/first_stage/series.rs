//! Linear sieve regression on tensor-product bases.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dgp::Dataset;
use crate::error::{config_err, Result, RmsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnivariateBasis {
    /// Orthonormal Legendre polynomials of degree `0..J_n`.
    Legendre,
    /// Clamped uniform B-splines of degree `min(3, J_n − 1)`.
    CubicSpline,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesSpec {
    pub basis: UnivariateBasis,
    /// Univariate basis size `J_n`; the tensor basis has `J_n^{dim}` terms.
    pub per_dim: usize,
}

impl Default for SeriesSpec {
    fn default() -> Self {
        Self {
            basis: UnivariateBasis::Legendre,
            per_dim: 4,
        }
    }
}

impl SeriesSpec {
    pub fn total_dim(&self, input_dim: usize) -> usize {
        self.per_dim.pow(input_dim as u32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRegressor {
    pub basis: UnivariateBasis,
    pub per_dim: usize,
    /// Per-coordinate bounds mapped affinely onto [−1, 1].
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub coefficients: Vec<f64>,
}

/// Orthonormal Legendre values `√((2k+1)/2)·P_k(t)` for `k < count`.
fn legendre_values(t: f64, count: usize, out: &mut [f64]) {
    let mut p_prev = 1.0;
    let mut p = t;
    for k in 0..count {
        let pk = match k {
            0 => 1.0,
            1 => t,
            _ => {
                let next = ((2 * k - 1) as f64 * t * p - (k - 1) as f64 * p_prev) / k as f64;
                p_prev = p;
                p = next;
                next
            }
        };
        out[k] = pk * ((2 * k + 1) as f64 / 2.0).sqrt();
    }
}

/// Clamped B-spline basis of `count` functions on [−1, 1].
fn bspline_values(t: f64, count: usize, out: &mut [f64]) {
    let degree = count.saturating_sub(1).min(3);
    let t = t.clamp(-1.0, 1.0);
    let interior = count - degree - 1;
    let mut knots = Vec::with_capacity(count + degree + 1);
    knots.extend(std::iter::repeat_n(-1.0, degree + 1));
    for k in 1..=interior {
        knots.push(-1.0 + 2.0 * k as f64 / (interior + 1) as f64);
    }
    knots.extend(std::iter::repeat_n(1.0, degree + 1));

    // degree-0 indicators on half-open spans; the right endpoint belongs to the last span
    let spans = knots.len() - 1;
    let mut b = vec![0.0; spans];
    let last_span = (0..spans).rev().find(|&i| knots[i] < knots[i + 1]).unwrap_or(0);
    for i in 0..spans {
        if (knots[i] <= t && t < knots[i + 1]) || (i == last_span && t == knots[i + 1]) {
            b[i] = 1.0;
        }
    }
    for p in 1..=degree {
        for i in 0..spans - p {
            let left_den = knots[i + p] - knots[i];
            let right_den = knots[i + p + 1] - knots[i + 1];
            let left = if left_den > 0.0 {
                (t - knots[i]) / left_den * b[i]
            } else {
                0.0
            };
            let right = if right_den > 0.0 {
                (knots[i + p + 1] - t) / right_den * b[i + 1]
            } else {
                0.0
            };
            b[i] = left + right;
        }
    }
    out[..count].copy_from_slice(&b[..count]);
}

fn univariate(basis: UnivariateBasis, t: f64, count: usize, out: &mut [f64]) {
    match basis {
        UnivariateBasis::Legendre => legendre_values(t, count, out),
        UnivariateBasis::CubicSpline => bspline_values(t, count, out),
    }
}

impl SeriesRegressor {
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Tensor-product basis vector at `x`; the first coordinate varies slowest.
    pub fn basis_vector(&self, x: &[f64]) -> Vec<f64> {
        tensor_basis(self.basis, self.per_dim, &self.lower, &self.upper, x)
    }

    pub fn predict_raw(&self, x: &[f64]) -> f64 {
        self.basis_vector(x)
            .iter()
            .zip(&self.coefficients)
            .map(|(b, c)| b * c)
            .sum()
    }
}

fn tensor_basis(
    basis: UnivariateBasis,
    per_dim: usize,
    lower: &[f64],
    upper: &[f64],
    x: &[f64],
) -> Vec<f64> {
    let mut out = vec![1.0];
    let mut uni = vec![0.0; per_dim];
    for (c, &xc) in x.iter().enumerate() {
        let t = 2.0 * (xc - lower[c]) / (upper[c] - lower[c]) - 1.0;
        univariate(basis, t, per_dim, &mut uni);
        let mut next = Vec::with_capacity(out.len() * per_dim);
        for &o in &out {
            for &u in &uni {
                next.push(o * u);
            }
        }
        out = next;
    }
    out
}

pub fn fit_series(data: &Dataset, spec: &SeriesSpec) -> Result<SeriesRegressor> {
    let n = data.n();
    let dim = data.width();
    if spec.per_dim == 0 {
        return config_err("series basis size must be positive");
    }
    let k = spec
        .per_dim
        .checked_pow(dim as u32)
        .filter(|&k| k < n)
        .ok_or_else(|| {
            RmsError::Config(format!(
                "series dimension {}^{} must be below the sample size {}",
                spec.per_dim, dim, n
            ))
        })?;

    let (lower, upper): (Vec<f64>, Vec<f64>) = match data.support {
        Some((lo, hi)) => (vec![lo; dim], vec![hi; dim]),
        None => (0..dim)
            .map(|c| {
                (0..n).map(|i| data.block(i)[c]).fold(
                    (f64::INFINITY, f64::NEG_INFINITY),
                    |(lo, hi), v| (lo.min(v), hi.max(v)),
                )
            })
            .map(|(lo, hi)| if hi > lo { (lo, hi) } else { (lo - 1.0, lo + 1.0) })
            .unzip(),
    };

    let mut design = DMatrix::<f64>::zeros(n, k);
    for i in 0..n {
        let row = tensor_basis(spec.basis, spec.per_dim, &lower, &upper, data.block(i));
        for (c, v) in row.into_iter().enumerate() {
            design[(i, c)] = v;
        }
    }
    let y = DVector::from_column_slice(&data.y_centered);

    let svd = design.svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * (n.max(k) as f64) * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if rank < k {
        return Err(RmsError::RankDeficient {
            deficient: k - rank,
            total: k,
        });
    }
    let beta = svd
        .solve(&y, tol)
        .map_err(|e| RmsError::Config(format!("least squares failed: {e}")))?;

    Ok(SeriesRegressor {
        basis: spec.basis,
        per_dim: spec.per_dim,
        lower,
        upper,
        coefficients: beta.iter().copied().collect(),
    })
}
