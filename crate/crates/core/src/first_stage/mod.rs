//! First-stage nonparametric estimators of `h₀(x) = E[y − c_J | X = x]`.
//!
//! Every fitted model is immutable and clamps its predictions to the range of
//! a centered probability, `[−c_J, 1 − c_J]`.

pub mod kernel;
pub mod mlp;
pub mod ridge;
pub mod series;

use serde::{Deserialize, Serialize};

use crate::dgp::Dataset;
use crate::error::{Result, RmsError};

pub use kernel::{fit_kernel, Bandwidth, KernelFamily, KernelRegressor, KernelSpec};
pub use mlp::{fit_mlp, Mlp, MlpRegressor, MlpSpec};
pub use ridge::{fit_kernel_ridge, KernelRidgeRegressor, KernelRidgeSpec};
pub use series::{fit_series, SeriesRegressor, SeriesSpec, UnivariateBasis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressorKind {
    Kernel,
    Series,
    Mlp,
    KernelRidge,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Kernel(KernelRegressor),
    Series(SeriesRegressor),
    Mlp(MlpRegressor),
    KernelRidge(KernelRidgeRegressor),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedRegressor {
    model: Model,
    dim: usize,
    clamp: (f64, f64),
}

/// Anything that can be evaluated as `h(x)` on a flattened covariate block.
pub trait HFunction: Sync {
    fn h(&self, x_block: &[f64]) -> f64;
}

/// Prediction range for a given centering constant.
pub fn clamp_range(centering: f64) -> (f64, f64) {
    (-centering, 1.0 - centering)
}

impl FittedRegressor {
    pub fn new(model: Model, dim: usize, centering: f64) -> Self {
        Self {
            model,
            dim,
            clamp: clamp_range(centering),
        }
    }

    pub fn kind(&self) -> RegressorKind {
        match self.model {
            Model::Kernel(_) => RegressorKind::Kernel,
            Model::Series(_) => RegressorKind::Series,
            Model::Mlp(_) => RegressorKind::Mlp,
            Model::KernelRidge(_) => RegressorKind::KernelRidge,
        }
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn clamp_bounds(&self) -> (f64, f64) {
        self.clamp
    }

    /// Unclamped prediction.
    pub fn predict_unclamped(&self, x: &[f64]) -> f64 {
        match &self.model {
            Model::Kernel(k) => k.predict_raw(x).value,
            Model::Series(s) => s.predict_raw(x),
            Model::Mlp(m) => m.network.predict(x),
            Model::KernelRidge(r) => r.predict_raw(x),
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(RmsError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(self.predict_unclamped(x).clamp(self.clamp.0, self.clamp.1))
    }

    /// Serializable dump. Kernel models reference their training data
    /// through `data_ref` rather than embedding it.
    pub fn dump(&self, data_ref: Option<&str>) -> ModelDump {
        let model = match &self.model {
            Model::Kernel(k) => ModelParams::Kernel {
                family: k.family,
                bandwidth: k.bandwidth,
                data_ref: data_ref.map(str::to_string),
            },
            Model::Series(s) => ModelParams::Series(s.clone()),
            Model::Mlp(m) => ModelParams::Mlp {
                sizes: m.network.sizes().to_vec(),
                params: m.network.params().to_vec(),
            },
            Model::KernelRidge(r) => ModelParams::KernelRidge(r.clone()),
        };
        ModelDump {
            dim: self.dim,
            clamp: self.clamp,
            model,
        }
    }

    /// Inverse of [`FittedRegressor::dump`]; kernel dumps need their data.
    pub fn load(dump: ModelDump, training: Option<&Dataset>) -> Result<Self> {
        let model = match dump.model {
            ModelParams::Kernel {
                family, bandwidth, ..
            } => {
                let data = training.ok_or_else(|| {
                    RmsError::Config("kernel model dump requires its training data".into())
                })?;
                Model::Kernel(KernelRegressor::from_parts(family, bandwidth, data))
            }
            ModelParams::Series(s) => Model::Series(s),
            ModelParams::Mlp { sizes, params } => Model::Mlp(MlpRegressor {
                network: Mlp::from_parts(sizes, params)?,
                epoch_losses: Vec::new(),
            }),
            ModelParams::KernelRidge(r) => Model::KernelRidge(r),
        };
        Ok(Self {
            model,
            dim: dump.dim,
            clamp: dump.clamp,
        })
    }
}

impl HFunction for FittedRegressor {
    fn h(&self, x_block: &[f64]) -> f64 {
        self.predict_unclamped(x_block).clamp(self.clamp.0, self.clamp.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDump {
    pub dim: usize,
    pub clamp: (f64, f64),
    pub model: ModelParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelParams {
    Kernel {
        family: KernelFamily,
        bandwidth: f64,
        data_ref: Option<String>,
    },
    Series(SeriesRegressor),
    Mlp {
        sizes: Vec<usize>,
        params: Vec<f64>,
    },
    KernelRidge(KernelRidgeRegressor),
}

/// Configuration of a first-stage estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FirstStageSpec {
    Kernel(KernelSpec),
    Series(SeriesSpec),
    Mlp(MlpSpec),
    KernelRidge(KernelRidgeSpec),
}

impl FirstStageSpec {
    pub fn fit(&self, data: &Dataset) -> Result<FittedRegressor> {
        let model = match self {
            FirstStageSpec::Kernel(s) => Model::Kernel(fit_kernel(data, s)?),
            FirstStageSpec::Series(s) => Model::Series(fit_series(data, s)?),
            FirstStageSpec::Mlp(s) => Model::Mlp(fit_mlp(data, s)?),
            FirstStageSpec::KernelRidge(s) => Model::KernelRidge(fit_kernel_ridge(data, s)?),
        };
        Ok(FittedRegressor::new(model, data.width(), data.centering))
    }

    /// Copy with the stochastic seed replaced (only the MLP uses one).
    pub fn with_seed(&self, seed: u64) -> Self {
        match *self {
            FirstStageSpec::Mlp(s) => FirstStageSpec::Mlp(MlpSpec { seed, ..s }),
            other => other,
        }
    }
}
