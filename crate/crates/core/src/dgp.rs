//! Simulation designs for binary choice with one or two logistic indexes.
//!
//! Single-index: `y = 1{x'θ₀ > ε}`. Two-index: `y = 1{x₁'θ₀ > ε₁}·1{x₂'θ₀ > ε₂}`.
//! Errors are standard logistic, drawn by inverse CDF. Covariates are
//! i.i.d. uniform on `[covariate_low, covariate_high]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::direction::{dot, normalize, Direction};
use crate::error::{config_err, Result, RmsError};
use crate::rng::{open_unit, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    SingleIndex,
    TwoIndex,
}

impl Design {
    /// Number of indexes `J`.
    pub fn num_indexes(self) -> usize {
        match self {
            Design::SingleIndex => 1,
            Design::TwoIndex => 2,
        }
    }

    /// `P(y = 1)` when every index is zero, i.e. `2^{-J}`.
    pub fn centering(self) -> f64 {
        centering_for(self.num_indexes())
    }
}

pub fn centering_for(num_indexes: usize) -> f64 {
    0.5f64.powi(num_indexes as i32)
}

/// `(√3/3, −√3/3, √3/3)`.
pub fn default_theta0() -> Direction {
    let s = 3f64.sqrt() / 3.0;
    normalize(&[s, -s, s]).expect("nonzero")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DgpSpec {
    pub design: Design,
    pub n: usize,
    pub theta0: Direction,
    pub d: usize,
    pub covariate_low: f64,
    pub covariate_high: f64,
    pub seed: u64,
}

impl Default for DgpSpec {
    fn default() -> Self {
        Self {
            design: Design::SingleIndex,
            n: 1000,
            theta0: default_theta0(),
            d: 3,
            covariate_low: -2.0,
            covariate_high: 2.0,
            seed: 0,
        }
    }
}

impl DgpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return config_err("n must be positive");
        }
        if self.d == 0 {
            return config_err("d must be positive");
        }
        if self.theta0.dim() != self.d {
            return Err(RmsError::DimensionMismatch {
                expected: self.d,
                got: self.theta0.dim(),
            });
        }
        if (crate::direction::norm(&self.theta0) - 1.0).abs() > 1e-12 {
            return config_err("theta0 must have unit norm");
        }
        if !(self.covariate_low < self.covariate_high) {
            return config_err("covariate_low must be below covariate_high");
        }
        Ok(())
    }

    /// Lebesgue density of the uniform covariate law at an interior point of
    /// one `d`-dimensional block.
    pub fn block_density(&self) -> f64 {
        (self.covariate_high - self.covariate_low).powi(-(self.d as i32))
    }
}

/// A sample of `n` observations, each a `J × d` covariate block plus a
/// centered binary response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// Row-major `n × J × d`.
    pub x: Vec<f64>,
    pub y_centered: Vec<f64>,
    pub centering: f64,
    pub num_indexes: usize,
    pub d: usize,
    /// Known covariate support, if any; used to rescale series bases.
    pub support: Option<(f64, f64)>,
}

impl Dataset {
    pub fn new(
        x: Vec<f64>,
        y_centered: Vec<f64>,
        centering: f64,
        num_indexes: usize,
        d: usize,
        support: Option<(f64, f64)>,
    ) -> Result<Self> {
        let width = num_indexes * d;
        if width == 0 {
            return config_err("J and d must be positive");
        }
        if x.len() != y_centered.len() * width {
            return Err(RmsError::DimensionMismatch {
                expected: y_centered.len() * width,
                got: x.len(),
            });
        }
        Ok(Self {
            x,
            y_centered,
            centering,
            num_indexes,
            d,
            support,
        })
    }

    pub fn n(&self) -> usize {
        self.y_centered.len()
    }

    /// `J·d`, the flattened covariate length.
    pub fn width(&self) -> usize {
        self.num_indexes * self.d
    }

    /// Flattened covariate block of observation `i`.
    pub fn block(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.x[i * w..(i + 1) * w]
    }

    /// Raw binary outcome of observation `i`.
    pub fn y_raw(&self, i: usize) -> f64 {
        self.y_centered[i] + self.centering
    }

    /// Sub-sample consisting of the given rows.
    pub fn select(&self, rows: &[usize]) -> Dataset {
        let mut x = Vec::with_capacity(rows.len() * self.width());
        let mut y = Vec::with_capacity(rows.len());
        for &i in rows {
            x.extend_from_slice(self.block(i));
            y.push(self.y_centered[i]);
        }
        Dataset {
            x,
            y_centered: y,
            centering: self.centering,
            num_indexes: self.num_indexes,
            d: self.d,
            support: self.support,
        }
    }
}

/// Logistic CDF `1 / (1 + e^{-t})`.
pub fn logistic_cdf(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Inverse logistic CDF, `log(u / (1 − u))`.
pub fn logistic_quantile(u: f64) -> f64 {
    (u / (1.0 - u)).ln()
}

/// Closed-form `E[y − c_J | X = x]` for the designs.
pub fn true_h0(design: Design, x_block: &[f64], theta0: &[f64]) -> Result<f64> {
    let d = theta0.len();
    let j = design.num_indexes();
    if x_block.len() != j * d {
        return Err(RmsError::DimensionMismatch {
            expected: j * d,
            got: x_block.len(),
        });
    }
    let p: f64 = x_block
        .chunks_exact(d)
        .map(|xj| logistic_cdf(dot(xj, theta0)))
        .product();
    Ok(p - design.centering())
}

/// One outcome draw at a fixed covariate block.
pub fn draw_outcome(design: Design, x_block: &[f64], theta0: &[f64], rng: &mut impl Rng) -> f64 {
    let d = theta0.len();
    let mut y = 1.0;
    for xj in x_block.chunks_exact(d).take(design.num_indexes()) {
        let eps = logistic_quantile(open_unit(rng));
        if dot(xj, theta0) <= eps {
            y = 0.0;
        }
    }
    y
}

fn generate(spec: &DgpSpec, expected: Design) -> Result<Dataset> {
    spec.validate()?;
    if spec.design != expected {
        return config_err(format!(
            "design {:?} passed to the {:?} generator",
            spec.design, expected
        ));
    }
    let j = spec.design.num_indexes();
    let width = j * spec.d;
    let mut rng = stream(spec.seed);
    let span = spec.covariate_high - spec.covariate_low;
    let mut x = Vec::with_capacity(spec.n * width);
    let mut y = Vec::with_capacity(spec.n);
    let mut block = vec![0.0; width];
    for _ in 0..spec.n {
        for v in block.iter_mut() {
            *v = spec.covariate_low + span * rng.random::<f64>();
        }
        let outcome = draw_outcome(spec.design, &block, &spec.theta0, &mut rng);
        x.extend_from_slice(&block);
        y.push(outcome - spec.design.centering());
    }
    Dataset::new(
        x,
        y,
        spec.design.centering(),
        j,
        spec.d,
        Some((spec.covariate_low, spec.covariate_high)),
    )
}

pub fn gen_single_index(spec: &DgpSpec) -> Result<Dataset> {
    generate(spec, Design::SingleIndex)
}

pub fn gen_two_index(spec: &DgpSpec) -> Result<Dataset> {
    generate(spec, Design::TwoIndex)
}

/// Dispatch on `spec.design`.
pub fn generate_dataset(spec: &DgpSpec) -> Result<Dataset> {
    generate(spec, spec.design)
}
