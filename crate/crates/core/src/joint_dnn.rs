//! Joint estimation of `(θ, β)` with a sign-extracting head on an MLP.
//!
//! The network output is `h_{θ,β}(x) = g₊(x; θ, β) − g₋(x; θ, β)` where the
//! MLP `f_β` supplies `h` to the same ReLU layer the criterion uses. Training
//! minimizes squared error against the centered outcome in three stages:
//!
//! 1. fit `f_β` alone (the head is bypassed, which is its `θ = 0` limit);
//! 2. freeze `β`, draw `θ` on the sphere and fit `θ` alone;
//! 3. fit both jointly.
//!
//! `θ` is renormalized after every update.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adam::{Adam, AdamParams};
use crate::criterion::{layer_terms, LayerTerms};
use crate::dgp::Dataset;
use crate::direction::{normalize, Direction};
use crate::error::{config_err, Result, RmsError};
use crate::first_stage::mlp::{train_mse, ForwardCache, Mlp, DEFAULT_BATCH_SIZE};
use crate::rng::{derive_seed, stream, unit_sphere, StreamRng};

/// `(g₊, g₋)` for one observation.
pub fn rms_layer_forward(h_val: f64, x_block: &[f64], theta: &[f64]) -> (f64, f64) {
    let t = layer_terms(theta, h_val, x_block);
    (t.g_plus, t.g_minus)
}

/// Gradients of the layer with respect to its inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients {
    pub d_h: f64,
    pub d_theta: Vec<f64>,
}

/// Chain rule through the layer given upstream `∂L/∂g₊` and `∂L/∂g₋`.
pub fn rms_layer_backward(
    cache: &LayerTerms,
    x_block: &[f64],
    d: usize,
    up_plus: f64,
    up_minus: f64,
) -> LayerGradients {
    let mut d_theta = vec![0.0; d];
    accumulate_theta_grad(cache, x_block, d, up_plus, up_minus, &mut d_theta);
    LayerGradients {
        d_h: up_plus * cache.dplus_dh + up_minus * cache.dminus_dh,
        d_theta,
    }
}

#[inline]
fn accumulate_theta_grad(
    cache: &LayerTerms,
    x_block: &[f64],
    d: usize,
    up_plus: f64,
    up_minus: f64,
    out: &mut [f64],
) {
    if let Some(j) = cache.plus_active_block {
        for (g, x) in out.iter_mut().zip(&x_block[j * d..(j + 1) * d]) {
            *g += up_plus * x;
        }
    }
    if let Some(j) = cache.minus_active_block {
        for (g, x) in out.iter_mut().zip(&x_block[j * d..(j + 1) * d]) {
            *g -= up_minus * x;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmsNetwork {
    pub mlp: Mlp,
    pub theta: Direction,
    pub num_indexes: usize,
    pub d: usize,
}

impl RmsNetwork {
    pub fn new(
        num_indexes: usize,
        d: usize,
        hidden_width: usize,
        hidden_layers: usize,
        rng: &mut StreamRng,
    ) -> Self {
        let mlp = Mlp::new(num_indexes * d, hidden_width, hidden_layers, rng);
        let theta = normalize(&unit_sphere(rng, d)).expect("unit draw");
        Self {
            mlp,
            theta,
            num_indexes,
            d,
        }
    }

    /// `h_{θ,β}(x)`.
    pub fn output(&self, x_block: &[f64]) -> f64 {
        let f = self.mlp.predict(x_block);
        let (gp, gm) = rms_layer_forward(f, x_block, &self.theta);
        gp - gm
    }

    pub fn mse(&self, data: &Dataset) -> f64 {
        (0..data.n())
            .map(|i| {
                let r = self.output(data.block(i)) - data.y_centered[i];
                r * r
            })
            .sum::<f64>()
            / data.n() as f64
    }

    /// Squared-error loss over `rows` with gradients for β and θ (overwritten).
    pub fn loss_and_grads(
        &self,
        data: &Dataset,
        rows: &[usize],
        grad_beta: &mut [f64],
        grad_theta: &mut [f64],
        cache: &mut ForwardCache,
    ) -> f64 {
        grad_beta.iter_mut().for_each(|g| *g = 0.0);
        grad_theta.iter_mut().for_each(|g| *g = 0.0);
        let scale = 1.0 / rows.len() as f64;
        let mut loss = 0.0;
        for &i in rows {
            let x = data.block(i);
            let f = self.mlp.forward(x, cache);
            let t = layer_terms(&self.theta, f, x);
            let r = t.g_plus - t.g_minus - data.y_centered[i];
            loss += r * r;
            let dl_dh = 2.0 * r * scale;
            let lg_dh = dl_dh * t.dplus_dh - dl_dh * t.dminus_dh;
            accumulate_theta_grad(&t, x, self.d, dl_dh, -dl_dh, grad_theta);
            if lg_dh != 0.0 {
                self.mlp.backward(cache, lg_dh, grad_beta);
            }
        }
        loss * scale
    }

    /// Checkpoint with a hash of the training configuration.
    pub fn checkpoint(&self, config: &JointTrainConfig) -> Checkpoint {
        Checkpoint {
            sizes: self.mlp.sizes().to_vec(),
            params: self.mlp.params().to_vec(),
            theta: self.theta.clone(),
            num_indexes: self.num_indexes,
            d: self.d,
            config_hash: config.hash(),
        }
    }

    pub fn from_checkpoint(c: Checkpoint) -> Result<Self> {
        if c.theta.dim() != c.d || c.sizes.first() != Some(&(c.num_indexes * c.d)) {
            return config_err("checkpoint shapes are inconsistent");
        }
        Ok(Self {
            mlp: Mlp::from_parts(c.sizes, c.params)?,
            theta: c.theta,
            num_indexes: c.num_indexes,
            d: c.d,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub sizes: Vec<usize>,
    pub params: Vec<f64>,
    pub theta: Direction,
    pub num_indexes: usize,
    pub d: usize,
    pub config_hash: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JointTrainConfig {
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub batch_size: Option<usize>,
    pub stage1_epochs: usize,
    pub stage2_epochs: usize,
    pub stage3_epochs: usize,
    pub stage1_lr: f64,
    pub stage2_lr: f64,
    pub stage3_lr: f64,
    /// Number of sphere draws tried in stage 2; the lowest final loss wins.
    pub stage2_starts: usize,
    pub seed: u64,
}

impl Default for JointTrainConfig {
    fn default() -> Self {
        Self {
            hidden_width: 10,
            hidden_layers: 2,
            batch_size: Some(DEFAULT_BATCH_SIZE),
            stage1_epochs: 100,
            stage2_epochs: 200,
            stage3_epochs: 100,
            stage1_lr: 0.01,
            stage2_lr: 0.01,
            stage3_lr: 0.002,
            stage2_starts: 4,
            seed: 0,
        }
    }
}

impl JointTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_width == 0 || self.hidden_layers == 0 {
            return config_err("network width and depth must be positive");
        }
        if self.stage1_epochs == 0 || self.stage2_epochs == 0 || self.stage3_epochs == 0 {
            return config_err("every training stage needs a positive epoch count");
        }
        if !(self.stage1_lr > 0.0 && self.stage2_lr > 0.0 && self.stage3_lr > 0.0) {
            return config_err("learning rates must be positive");
        }
        if self.stage2_starts == 0 || self.batch_size == Some(0) {
            return config_err("stage-2 starts and batch size must be positive");
        }
        Ok(())
    }

    /// Hex SHA-256 of the JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointFit {
    pub theta_hat: Direction,
    pub network: RmsNetwork,
    /// Mean epoch losses of each stage.
    pub stage_losses: [Vec<f64>; 3],
}

fn batches(n: usize, batch_size: Option<usize>) -> usize {
    batch_size.unwrap_or(n).clamp(1, n.max(1))
}

fn non_finite(stage: usize, epoch: usize, loss: f64) -> RmsError {
    RmsError::NonFinite {
        context: format!("joint training stage {stage}"),
        epoch,
        loss,
    }
}

/// Stage 2 for one initial direction: fit θ against frozen `f` values.
fn fit_theta(
    data: &Dataset,
    f_values: &[f64],
    init: Direction,
    config: &JointTrainConfig,
    rng: &mut StreamRng,
) -> Result<(Direction, Vec<f64>)> {
    let n = data.n();
    let d = data.d;
    let batch = batches(n, config.batch_size);
    let mut theta = init.into_vec();
    let mut adam = Adam::new(AdamParams::with_lr(config.stage2_lr), d);
    let mut grad = vec![0.0; d];
    let mut order: Vec<usize> = (0..n).collect();
    let mut losses = Vec::with_capacity(config.stage2_epochs);
    for epoch in 0..config.stage2_epochs {
        if batch < n {
            order.shuffle(rng);
        }
        let mut total = 0.0;
        let mut count = 0;
        for rows in order.chunks(batch) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / rows.len() as f64;
            let mut loss = 0.0;
            for &i in rows {
                let x = data.block(i);
                let t = layer_terms(&theta, f_values[i], x);
                let r = t.g_plus - t.g_minus - data.y_centered[i];
                loss += r * r;
                let dl_dh = 2.0 * r * scale;
                accumulate_theta_grad(&t, x, d, dl_dh, -dl_dh, &mut grad);
            }
            let loss = loss * scale;
            if !loss.is_finite() {
                return Err(non_finite(2, epoch, loss));
            }
            adam.descend(&mut theta, &grad);
            theta = normalize(&theta)?.into_vec();
            total += loss;
            count += 1;
        }
        losses.push(total / count as f64);
    }
    Ok((normalize(&theta)?, losses))
}

fn theta_loss(data: &Dataset, f_values: &[f64], theta: &[f64]) -> f64 {
    (0..data.n())
        .map(|i| {
            let (gp, gm) = rms_layer_forward(f_values[i], data.block(i), theta);
            let r = gp - gm - data.y_centered[i];
            r * r
        })
        .sum::<f64>()
        / data.n() as f64
}

/// Train β with θ held fixed, through the layer (`through_layer = true`) or
/// directly on `f_β` (the stage-1 bypass).
pub fn train_beta(
    net: &mut RmsNetwork,
    data: &Dataset,
    epochs: usize,
    learning_rate: f64,
    batch_size: Option<usize>,
    through_layer: bool,
    rng: &mut StreamRng,
) -> Result<Vec<f64>> {
    if !through_layer {
        return train_mse(
            &mut net.mlp,
            &data.x,
            &data.y_centered,
            learning_rate,
            epochs,
            batch_size,
            rng,
            "joint training stage 1",
        );
    }
    let n = data.n();
    let batch = batches(n, batch_size);
    let mut adam = Adam::new(AdamParams::with_lr(learning_rate), net.mlp.n_params());
    let mut grad_beta = vec![0.0; net.mlp.n_params()];
    let mut grad_theta = vec![0.0; net.d];
    let mut cache = ForwardCache::default();
    let mut order: Vec<usize> = (0..n).collect();
    let mut losses = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        if batch < n {
            order.shuffle(rng);
        }
        let mut total = 0.0;
        let mut count = 0;
        for rows in order.chunks(batch) {
            let loss = net.loss_and_grads(data, rows, &mut grad_beta, &mut grad_theta, &mut cache);
            if !loss.is_finite() {
                return Err(non_finite(1, epoch, loss));
            }
            adam.descend(net.mlp.params_mut(), &grad_beta);
            total += loss;
            count += 1;
        }
        losses.push(total / count as f64);
    }
    Ok(losses)
}

/// Stage 2 on its own: θ fitted against the frozen `net.mlp`.
pub fn train_theta(
    net: &mut RmsNetwork,
    data: &Dataset,
    config: &JointTrainConfig,
    rng: &mut StreamRng,
) -> Result<Vec<f64>> {
    let f_values: Vec<f64> = (0..data.n()).map(|i| net.mlp.predict(data.block(i))).collect();
    let mut best: Option<(f64, Direction, Vec<f64>)> = None;
    for k in 0..config.stage2_starts {
        let init = if k == 0 {
            net.theta.clone()
        } else {
            normalize(&unit_sphere(rng, data.d))?
        };
        let (theta, losses) = fit_theta(data, &f_values, init, config, rng)?;
        let final_loss = theta_loss(data, &f_values, &theta);
        if best.as_ref().is_none_or(|(l, _, _)| final_loss < *l) {
            best = Some((final_loss, theta, losses));
        }
    }
    let (_, theta, losses) = best.expect("at least one stage-2 start");
    net.theta = theta;
    Ok(losses)
}

/// Stage 3: all parameters together.
pub fn train_all(
    net: &mut RmsNetwork,
    data: &Dataset,
    epochs: usize,
    learning_rate: f64,
    batch_size: Option<usize>,
    rng: &mut StreamRng,
) -> Result<Vec<f64>> {
    let n = data.n();
    let batch = batches(n, batch_size);
    let mut adam_beta = Adam::new(AdamParams::with_lr(learning_rate), net.mlp.n_params());
    let mut adam_theta = Adam::new(AdamParams::with_lr(learning_rate), net.d);
    let mut grad_beta = vec![0.0; net.mlp.n_params()];
    let mut grad_theta = vec![0.0; net.d];
    let mut cache = ForwardCache::default();
    let mut order: Vec<usize> = (0..n).collect();
    let mut losses = Vec::with_capacity(epochs);
    let mut theta = net.theta.to_vec();
    for epoch in 0..epochs {
        if batch < n {
            order.shuffle(rng);
        }
        let mut total = 0.0;
        let mut count = 0;
        for rows in order.chunks(batch) {
            let loss = net.loss_and_grads(data, rows, &mut grad_beta, &mut grad_theta, &mut cache);
            if !loss.is_finite() {
                return Err(non_finite(3, epoch, loss));
            }
            adam_beta.descend(net.mlp.params_mut(), &grad_beta);
            adam_theta.descend(&mut theta, &grad_theta);
            net.theta = normalize(&theta)?;
            theta.copy_from_slice(&net.theta);
            total += loss;
            count += 1;
        }
        losses.push(total / count as f64);
    }
    Ok(losses)
}

/// Full three-stage schedule starting from `net`.
pub fn joint_fit(data: &Dataset, mut net: RmsNetwork, config: &JointTrainConfig) -> Result<JointFit> {
    config.validate()?;
    if net.num_indexes != data.num_indexes || net.d != data.d {
        return Err(RmsError::DimensionMismatch {
            expected: data.width(),
            got: net.num_indexes * net.d,
        });
    }
    let mut rng = stream(derive_seed(config.seed, &[1]));
    let s1 = train_beta(
        &mut net,
        data,
        config.stage1_epochs,
        config.stage1_lr,
        config.batch_size,
        false,
        &mut rng,
    )?;
    net.theta = normalize(&unit_sphere(&mut rng, data.d))?;
    let s2 = train_theta(&mut net, data, config, &mut rng)?;
    let s3 = train_all(
        &mut net,
        data,
        config.stage3_epochs,
        config.stage3_lr,
        config.batch_size,
        &mut rng,
    )?;
    Ok(JointFit {
        theta_hat: net.theta.clone(),
        network: net,
        stage_losses: [s1, s2, s3],
    })
}

/// Build a fresh network from `config.seed` and run [`joint_fit`].
pub fn fit_joint_from_seed(data: &Dataset, config: &JointTrainConfig) -> Result<JointFit> {
    config.validate()?;
    let mut rng = stream(derive_seed(config.seed, &[0]));
    let net = RmsNetwork::new(
        data.num_indexes,
        data.d,
        config.hidden_width,
        config.hidden_layers,
        &mut rng,
    );
    joint_fit(data, net, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_cases() {
        assert_eq!(rms_layer_forward(0.0, &[1.0, -2.0], &[0.6, 0.8]), (0.0, 0.0));
        let (gp, gm) = rms_layer_forward(0.4, &[-0.1], &[1.0]);
        assert!((gp - 0.3).abs() < 1e-15);
        assert_eq!(gm, 0.0);
    }

    #[test]
    fn backward_active_plus() {
        let x = [-0.1, 0.5];
        let theta = [1.0, 0.0];
        let t = layer_terms(&theta, 0.4, &x);
        let g = rms_layer_backward(&t, &x, 2, 1.0, 0.0);
        assert_eq!(g.d_h, 1.0);
        assert_eq!(g.d_theta, vec![-0.1, 0.5]);
    }

    #[test]
    fn backward_inactive_is_zero() {
        // h > 0 but index strongly negative: g₊ = [0.1 − 2]₊ = 0, g₋ = 0
        let x = [-2.0];
        let t = layer_terms(&[1.0], 0.1, &x);
        assert_eq!((t.g_plus, t.g_minus), (0.0, 0.0));
        let g = rms_layer_backward(&t, &x, 1, 0.7, -0.3);
        assert_eq!(g.d_h, 0.0);
        assert_eq!(g.d_theta, vec![0.0]);
    }

    #[test]
    fn config_hash_tracks_fields() {
        let a = JointTrainConfig::default();
        let b = JointTrainConfig {
            stage2_epochs: 201,
            ..a
        };
        assert_eq!(a.hash(), JointTrainConfig::default().hash());
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn rejects_zero_epochs() {
        let c = JointTrainConfig {
            stage3_epochs: 0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }
}
