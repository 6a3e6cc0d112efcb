//! Fully connected ReLU network with hand-written backpropagation.
//!
//! Parameters live in one flat vector so a single [`Adam`] state covers the
//! whole network. Layer `l` with `a` inputs and `b` outputs stores its `b × a`
//! weight matrix (row-major) followed by its `b` biases. Hidden layers use
//! ReLU; the output layer is affine with a single unit.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adam::{Adam, AdamParams};
use crate::criterion::relu;
use crate::dgp::Dataset;
use crate::error::{config_err, Result, RmsError};
use crate::rng::stream;

/// Mini-batch size used unless configured otherwise.
pub const DEFAULT_BATCH_SIZE: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpSpec {
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Mini-batch size; `None` trains full-batch.
    pub batch_size: Option<usize>,
    pub seed: u64,
}

impl Default for MlpSpec {
    fn default() -> Self {
        Self {
            hidden_width: 10,
            hidden_layers: 2,
            learning_rate: 0.01,
            epochs: 100,
            batch_size: Some(DEFAULT_BATCH_SIZE),
            seed: 0,
        }
    }
}

impl MlpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_width == 0 || self.hidden_layers == 0 || self.epochs == 0 {
            return config_err("MLP width, depth and epochs must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return config_err("MLP learning rate must be positive");
        }
        if self.batch_size == Some(0) {
            return config_err("MLP batch size must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Per-layer activations from the last forward pass.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    next_delta: Vec<f64>,
}

impl Mlp {
    /// He-uniform weights `U(±√(6/fan_in))`, zero biases.
    pub fn new(input_dim: usize, hidden_width: usize, hidden_layers: usize, rng: &mut impl Rng) -> Self {
        let mut sizes = vec![input_dim];
        sizes.extend(std::iter::repeat_n(hidden_width, hidden_layers));
        sizes.push(1);
        let mut params = Vec::new();
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / fan_in as f64).sqrt();
            params.extend((0..fan_in * fan_out).map(|_| rng.random_range(-limit..limit)));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Self { sizes, params }
    }

    pub fn from_parts(sizes: Vec<usize>, params: Vec<f64>) -> Result<Self> {
        let expected: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        if sizes.len() < 2 || *sizes.last().unwrap() != 1 {
            return config_err("network must end in a single output unit");
        }
        if params.len() != expected {
            return Err(RmsError::DimensionMismatch {
                expected,
                got: params.len(),
            });
        }
        Ok(Self { sizes, params })
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Forward pass storing activations for [`Mlp::backward`].
    pub fn forward(&self, x: &[f64], cache: &mut ForwardCache) -> f64 {
        let layers = self.sizes.len() - 1;
        cache.acts.resize_with(layers + 1, Vec::new);
        cache.acts[0].clear();
        cache.acts[0].extend_from_slice(x);
        let mut offset = 0;
        for l in 0..layers {
            let (a, b) = (self.sizes[l], self.sizes[l + 1]);
            let (w, rest) = self.params[offset..].split_at(a * b);
            let bias = &rest[..b];
            offset += a * b + b;
            let (prev, next) = cache.acts.split_at_mut(l + 1);
            let input = &prev[l];
            let out = &mut next[0];
            out.clear();
            for o in 0..b {
                let row = &w[o * a..(o + 1) * a];
                let mut z = bias[o];
                for i in 0..a {
                    z += row[i] * input[i];
                }
                out.push(if l + 1 < layers { relu(z) } else { z });
            }
        }
        cache.acts[layers][0]
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.forward(x, &mut ForwardCache::default())
    }

    /// Accumulate `d_out · ∂f/∂params` into `grad`, using the cached pass.
    pub fn backward(&self, cache: &mut ForwardCache, d_out: f64, grad: &mut [f64]) {
        let layers = self.sizes.len() - 1;
        let ForwardCache {
            acts,
            delta,
            next_delta,
        } = cache;
        delta.clear();
        delta.push(d_out);
        let mut offset = self.params.len();
        for l in (0..layers).rev() {
            let (a, b) = (self.sizes[l], self.sizes[l + 1]);
            offset -= a * b + b;
            let input = &acts[l];
            let w = &self.params[offset..offset + a * b];
            {
                let (gw, gb) = grad[offset..offset + a * b + b].split_at_mut(a * b);
                for o in 0..b {
                    let dlt = delta[o];
                    if dlt == 0.0 {
                        continue;
                    }
                    gb[o] += dlt;
                    let grow = &mut gw[o * a..(o + 1) * a];
                    for i in 0..a {
                        grow[i] += dlt * input[i];
                    }
                }
            }
            if l == 0 {
                break;
            }
            next_delta.clear();
            next_delta.resize(a, 0.0);
            for o in 0..b {
                let dlt = delta[o];
                if dlt == 0.0 {
                    continue;
                }
                let row = &w[o * a..(o + 1) * a];
                for i in 0..a {
                    next_delta[i] += row[i] * dlt;
                }
            }
            // ReLU mask: derivative 0 at and below the kink
            for i in 0..a {
                if input[i] <= 0.0 {
                    next_delta[i] = 0.0;
                }
            }
            std::mem::swap(delta, next_delta);
        }
    }

    /// Mean squared error over `rows` and its gradient (overwritten into `grad`).
    pub fn mse_and_grad(
        &self,
        xs: &[f64],
        ys: &[f64],
        rows: &[usize],
        grad: &mut [f64],
        cache: &mut ForwardCache,
    ) -> f64 {
        let dim = self.input_dim();
        grad.iter_mut().for_each(|g| *g = 0.0);
        let scale = 1.0 / rows.len() as f64;
        let mut loss = 0.0;
        for &i in rows {
            let f = self.forward(&xs[i * dim..(i + 1) * dim], cache);
            let r = f - ys[i];
            loss += r * r;
            self.backward(cache, 2.0 * r * scale, grad);
        }
        loss * scale
    }

    pub fn mse(&self, xs: &[f64], ys: &[f64]) -> f64 {
        let dim = self.input_dim();
        let mut cache = ForwardCache::default();
        ys.iter()
            .enumerate()
            .map(|(i, y)| {
                let r = self.forward(&xs[i * dim..(i + 1) * dim], &mut cache) - y;
                r * r
            })
            .sum::<f64>()
            / ys.len() as f64
    }
}

/// Train by ADAM on squared error; returns the mean loss of every epoch.
pub fn train_mse(
    mlp: &mut Mlp,
    xs: &[f64],
    ys: &[f64],
    learning_rate: f64,
    epochs: usize,
    batch_size: Option<usize>,
    rng: &mut impl Rng,
    context: &str,
) -> Result<Vec<f64>> {
    let n = ys.len();
    let mut adam = Adam::new(AdamParams::with_lr(learning_rate), mlp.n_params());
    let mut grad = vec![0.0; mlp.n_params()];
    let mut cache = ForwardCache::default();
    let mut order: Vec<usize> = (0..n).collect();
    let batch = batch_size.unwrap_or(n).clamp(1, n.max(1));
    let mut losses = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        if batch < n {
            order.shuffle(rng);
        }
        let mut total = 0.0;
        let mut batches = 0;
        for rows in order.chunks(batch) {
            let loss = mlp.mse_and_grad(xs, ys, rows, &mut grad, &mut cache);
            if !loss.is_finite() {
                return Err(RmsError::NonFinite {
                    context: context.to_string(),
                    epoch,
                    loss,
                });
            }
            adam.descend(mlp.params_mut(), &grad);
            total += loss;
            batches += 1;
        }
        losses.push(total / batches as f64);
    }
    Ok(losses)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpRegressor {
    pub network: Mlp,
    pub epoch_losses: Vec<f64>,
}

pub fn fit_mlp(data: &Dataset, spec: &MlpSpec) -> Result<MlpRegressor> {
    spec.validate()?;
    if data.n() == 0 {
        return config_err("MLP regression needs at least one observation");
    }
    let mut rng = stream(spec.seed);
    let mut network = Mlp::new(data.width(), spec.hidden_width, spec.hidden_layers, &mut rng);
    let epoch_losses = train_mse(
        &mut network,
        &data.x,
        &data.y_centered,
        spec.learning_rate,
        spec.epochs,
        spec.batch_size,
        &mut rng,
        "mlp first stage",
    )?;
    Ok(MlpRegressor {
        network,
        epoch_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_and_shapes() {
        let mut rng = stream(1);
        let mlp = Mlp::new(3, 10, 2, &mut rng);
        assert_eq!(mlp.sizes(), &[3, 10, 10, 1]);
        assert_eq!(mlp.n_params(), 3 * 10 + 10 + 10 * 10 + 10 + 10 + 1);
        assert!(Mlp::from_parts(vec![3, 2, 1], vec![0.0; 5]).is_err());
        assert!(Mlp::from_parts(vec![3, 2, 1], vec![0.0; 11]).is_ok());
    }

    #[test]
    fn invalid_spec() {
        let bad = MlpSpec {
            epochs: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = MlpSpec {
            learning_rate: -1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn diverging_training_reports_epoch() {
        let mut rng = stream(2);
        let mut mlp = Mlp::new(1, 4, 1, &mut rng);
        let xs = [1.0, 2.0];
        let ys = [f64::NAN, 0.0];
        let err = train_mse(&mut mlp, &xs, &ys, 0.01, 5, None, &mut rng, "test").unwrap_err();
        assert!(matches!(err, RmsError::NonFinite { epoch: 0, .. }));
    }
}
