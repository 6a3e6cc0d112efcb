//! The J-index ReLU maximum score criterion and its ascent subgradient.
//!
//! For an observation with covariate blocks `x_1..x_J` and first-stage value
//! `h`:
//!
//! ```text
//! g₊ = [ h − min_j [−x_j'θ]₊ ]₊
//! g₋ = [−h − min_j [ x_j'θ]₊ ]₊
//! Q̂(θ) = (1/n) Σ_i (g₊ + g₋)
//! ```
//!
//! Subgradients use derivative 0 at every ReLU kink and the lowest-index
//! minimizer when the inner minimum is tied.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dgp::{true_h0, Dataset, Design};
use crate::direction::{dot, Direction};
use crate::error::{Result, RmsError};
use crate::first_stage::HFunction;

/// `[t]₊`; NaN propagates.
#[inline]
pub fn relu(t: f64) -> f64 {
    if t > 0.0 || t.is_nan() {
        t
    } else {
        0.0
    }
}

/// `(min_j [−x_j'θ]₊, argmin)` with ties to the lowest index.
#[inline]
fn inner_neg(theta: &[f64], x_block: &[f64]) -> (f64, usize, f64) {
    let d = theta.len();
    let mut best = (f64::INFINITY, 0, 0.0);
    for (j, xj) in x_block.chunks_exact(d).enumerate() {
        let s = dot(xj, theta);
        let v = relu(-s);
        if v < best.0 {
            best = (v, j, s);
        }
    }
    best
}

/// `(min_j [x_j'θ]₊, argmin)` with ties to the lowest index.
#[inline]
fn inner_pos(theta: &[f64], x_block: &[f64]) -> (f64, usize, f64) {
    let d = theta.len();
    let mut best = (f64::INFINITY, 0, 0.0);
    for (j, xj) in x_block.chunks_exact(d).enumerate() {
        let s = dot(xj, theta);
        let v = relu(s);
        if v < best.0 {
            best = (v, j, s);
        }
    }
    best
}

/// `[h − min_j [−x_j'θ]₊]₊`. `x_block` holds `J` consecutive `d`-vectors.
pub fn g_plus(theta: &[f64], h_val: f64, x_block: &[f64]) -> f64 {
    relu(h_val - inner_neg(theta, x_block).0)
}

/// `[−h − min_j [x_j'θ]₊]₊`.
pub fn g_minus(theta: &[f64], h_val: f64, x_block: &[f64]) -> f64 {
    relu(-h_val - inner_pos(theta, x_block).0)
}

/// Values of `g₊`, `g₋` and their partial derivatives for one observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerTerms {
    pub g_plus: f64,
    pub g_minus: f64,
    /// `∂g₊/∂θ = x_{j*}` when active, else zero; `j*` indexes the block.
    pub plus_active_block: Option<usize>,
    /// `∂g₋/∂θ = −x_{k*}` when active, else zero.
    pub minus_active_block: Option<usize>,
    /// `∂g₊/∂h` (0 or 1).
    pub dplus_dh: f64,
    /// `∂g₋/∂h` (0 or −1).
    pub dminus_dh: f64,
}

/// Forward pass of the sign-extracting layer with cached branch information.
pub fn layer_terms(theta: &[f64], h_val: f64, x_block: &[f64]) -> LayerTerms {
    let (u, ju, su) = inner_neg(theta, x_block);
    let (v, jv, sv) = inner_pos(theta, x_block);
    let arg_plus = h_val - u;
    let arg_minus = -h_val - v;
    let plus_on = arg_plus > 0.0;
    let minus_on = arg_minus > 0.0;
    LayerTerms {
        g_plus: relu(arg_plus),
        g_minus: relu(arg_minus),
        plus_active_block: (plus_on && su < 0.0).then_some(ju),
        minus_active_block: (minus_on && sv > 0.0).then_some(jv),
        dplus_dh: if plus_on { 1.0 } else { 0.0 },
        dminus_dh: if minus_on { -1.0 } else { 0.0 },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriterionValue {
    pub q: f64,
    pub q_plus: f64,
    pub q_minus: f64,
}

/// Closed-form `h₀` of a simulation design, usable in place of a fitted model.
#[derive(Debug, Clone)]
pub struct OracleH0 {
    pub design: Design,
    pub theta0: Direction,
}

impl HFunction for OracleH0 {
    fn h(&self, x_block: &[f64]) -> f64 {
        true_h0(self.design, x_block, &self.theta0).expect("oracle block dimension")
    }
}

/// A sample criterion: data plus first-stage values at every observation.
#[derive(Debug, Clone)]
pub struct CriterionSpec<'a> {
    data: &'a Dataset,
    h: Vec<f64>,
}

impl<'a> CriterionSpec<'a> {
    /// Evaluate `h` once at every sample point.
    pub fn new(data: &'a Dataset, h: &dyn HFunction) -> Self {
        let values = (0..data.n()).map(|i| h.h(data.block(i))).collect();
        Self { data, h: values }
    }

    pub fn from_values(data: &'a Dataset, h: Vec<f64>) -> Result<Self> {
        if h.len() != data.n() {
            return Err(RmsError::DimensionMismatch {
                expected: data.n(),
                got: h.len(),
            });
        }
        Ok(Self { data, h })
    }

    pub fn data(&self) -> &Dataset {
        self.data
    }

    pub fn h_values(&self) -> &[f64] {
        &self.h
    }

    pub fn d(&self) -> usize {
        self.data.d
    }

    pub fn num_indexes(&self) -> usize {
        self.data.num_indexes
    }

    /// `(1/n) Σ |h(X_i)|`, the upper bound of `Q̂`.
    pub fn upper_bound(&self) -> f64 {
        self.h.iter().map(|h| h.abs()).sum::<f64>() / self.h.len() as f64
    }

    fn check(&self, theta: &[f64]) {
        assert_eq!(theta.len(), self.data.d, "theta dimension");
    }

    pub fn value(&self, theta: &[f64]) -> CriterionValue {
        self.check(theta);
        let mut qp = 0.0;
        let mut qm = 0.0;
        for (i, &h) in self.h.iter().enumerate() {
            let x = self.data.block(i);
            qp += g_plus(theta, h, x);
            qm += g_minus(theta, h, x);
        }
        let n = self.h.len() as f64;
        CriterionValue {
            q: (qp + qm) / n,
            q_plus: qp / n,
            q_minus: qm / n,
        }
    }

    /// Value and ascent subgradient in one pass.
    pub fn value_and_subgradient(&self, theta: &[f64]) -> (CriterionValue, Vec<f64>) {
        self.check(theta);
        let d = self.data.d;
        let mut grad = vec![0.0; d];
        let mut qp = 0.0;
        let mut qm = 0.0;
        for (i, &h) in self.h.iter().enumerate() {
            let x = self.data.block(i);
            let t = layer_terms(theta, h, x);
            qp += t.g_plus;
            qm += t.g_minus;
            if let Some(j) = t.plus_active_block {
                for (g, v) in grad.iter_mut().zip(&x[j * d..(j + 1) * d]) {
                    *g += v;
                }
            }
            if let Some(j) = t.minus_active_block {
                for (g, v) in grad.iter_mut().zip(&x[j * d..(j + 1) * d]) {
                    *g -= v;
                }
            }
        }
        let n = self.h.len() as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        (
            CriterionValue {
                q: (qp + qm) / n,
                q_plus: qp / n,
                q_minus: qm / n,
            },
            grad,
        )
    }
}

pub fn sample_criterion(spec: &CriterionSpec, theta: &[f64]) -> CriterionValue {
    spec.value(theta)
}

/// Ascent subgradient of `Q̂` at `theta` (Euclidean, in ambient coordinates).
pub fn criterion_subgradient(spec: &CriterionSpec, theta: &[f64]) -> Vec<f64> {
    spec.value_and_subgradient(theta).1
}

/// Smallest distance of any observation to a kink of the criterion at
/// `theta`: ReLU arguments, and gaps between the two smallest inner terms.
pub fn kink_margin(spec: &CriterionSpec, theta: &[f64]) -> f64 {
    let d = spec.d();
    let mut margin = f64::INFINITY;
    for (i, &h) in spec.h_values().iter().enumerate() {
        let x = spec.data().block(i);
        let s: Vec<f64> = x.chunks_exact(d).map(|xj| dot(xj, theta)).collect();
        for &sj in &s {
            margin = margin.min(sj.abs());
        }
        let u = s.iter().map(|&v| relu(-v)).fold(f64::INFINITY, f64::min);
        let v = s.iter().map(|&v| relu(v)).fold(f64::INFINITY, f64::min);
        margin = margin.min((h - u).abs()).min((-h - v).abs());
        for a in 0..s.len() {
            for b in a + 1..s.len() {
                margin = margin.min((s[a] - s[b]).abs());
            }
        }
    }
    margin
}

/// Write `(theta..., q, q_plus, q_minus)` rows as CSV.
pub fn write_criterion_trace<W: Write>(
    out: W,
    spec: &CriterionSpec,
    thetas: &[Vec<f64>],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let d = spec.d();
    let mut header: Vec<String> = (1..=d).map(|k| format!("theta_{k}")).collect();
    header.extend(["q", "q_plus", "q_minus"].map(String::from));
    w.write_record(&header)?;
    for th in thetas {
        let v = spec.value(th);
        let mut row: Vec<String> = th.iter().map(|x| x.to_string()).collect();
        row.extend([v.q, v.q_plus, v.q_minus].map(|x| x.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_values() {
        assert_eq!(relu(-1.0), 0.0);
        assert_eq!(relu(0.0), 0.0);
        assert_eq!(relu(2.5), 2.5);
    }

    #[test]
    fn g_plus_cases() {
        let theta = [1.0, 0.0];
        // all indexes positive: inner min is 0
        assert!((g_plus(&theta, 0.3, &[0.2, 5.0]) - 0.3).abs() < 1e-15);
        // J = 1, x'θ = −0.5
        assert_eq!(g_plus(&theta, 0.3, &[-0.5, 1.0]), 0.0);
        // J = 2, x₁'θ = −0.1, x₂'θ = 0.4: min((0.1)₊, (−0.4)₊) = 0
        assert!((g_plus(&theta, 0.3, &[-0.1, 0.0, 0.4, 0.0]) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn g_minus_cases() {
        let theta = [1.0];
        assert_eq!(g_minus(&theta, 0.3, &[-1.0]), 0.0);
        assert!((g_minus(&theta, -0.3, &[0.1]) - 0.2).abs() < 1e-15);
        assert_eq!(g_minus(&theta, -0.3, &[0.5]), 0.0);
    }

    #[test]
    fn single_observation_gradient_is_plus_x() {
        // h = 0.3, x'θ = −0.1: g₊ = 0.2 active, gradient +x
        let x = vec![-0.1, 0.7, 0.0];
        let data = Dataset::new(x.clone(), vec![0.0], 0.5, 1, 3, None).unwrap();
        let spec = CriterionSpec::from_values(&data, vec![0.3]).unwrap();
        let theta = [1.0, 0.0, 0.0];
        let (v, g) = spec.value_and_subgradient(&theta);
        assert!((v.q_plus - 0.2).abs() < 1e-15);
        assert_eq!(g, x);
    }

    #[test]
    fn zero_h_gives_zero_everything() {
        let data = Dataset::new(vec![1.0, -2.0, 0.5, 0.1, 0.3, -0.2], vec![0.0, 0.0], 0.5, 1, 3, None)
            .unwrap();
        let spec = CriterionSpec::from_values(&data, vec![0.0, 0.0]).unwrap();
        let (v, g) = spec.value_and_subgradient(&[0.6, 0.0, 0.8]);
        assert_eq!(v.q, 0.0);
        assert_eq!(g, vec![0.0; 3]);
    }

    #[test]
    fn trace_csv_header() {
        let data = Dataset::new(vec![1.0, 0.0], vec![0.0], 0.5, 1, 2, None).unwrap();
        let spec = CriterionSpec::from_values(&data, vec![0.2]).unwrap();
        let mut buf = Vec::new();
        write_criterion_trace(&mut buf, &spec, &[vec![1.0, 0.0]]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("theta_1,theta_2,q,q_plus,q_minus\n"));
    }
}
