//! Multi-start projected ADAM ascent of `Q̂` on the unit sphere.
//!
//! Each start runs plain ADAM on the ambient vector and renormalizes after
//! every update. Starts are independent; start `k` derives its initial point
//! from `(seed, k)`, so adding starts never changes the existing ones.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adam::{Adam, AdamParams};
use crate::criterion::CriterionSpec;
use crate::direction::{dot, normalize, Direction};
use crate::error::{config_err, Result, RmsError};
use crate::rng::{derive_seed, stream, unit_sphere};

pub use crate::direction::normalize as normalize_direction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Init {
    RandomSphere,
    Provided(Direction),
    Warm(Vec<Direction>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub n_starts: usize,
    pub init: Init,
    pub seed: u64,
    /// Remove the radial gradient component before the ADAM update.
    pub tangent_projection: bool,
    pub record_trace: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 500,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            n_starts: 8,
            init: Init::RandomSphere,
            seed: 0,
            tangent_projection: false,
            record_trace: false,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return config_err("optimizer learning rate must be positive");
        }
        if self.epochs == 0 {
            return config_err("optimizer needs at least one epoch");
        }
        if self.n_starts == 0 && self.init == Init::RandomSphere {
            return config_err("optimizer needs at least one start");
        }
        if let Init::Warm(list) = &self.init {
            if list.is_empty() {
                return config_err("warm start list is empty");
            }
        }
        Ok(())
    }

    fn adam(&self) -> AdamParams {
        AdamParams {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    /// Initial points for every start.
    pub fn starts(&self, d: usize) -> Result<Vec<Direction>> {
        match &self.init {
            Init::RandomSphere => (0..self.n_starts)
                .map(|k| {
                    let mut rng = stream(derive_seed(self.seed, &[k as u64]));
                    normalize(&unit_sphere(&mut rng, d))
                })
                .collect(),
            Init::Provided(t) => Ok(vec![t.clone()]),
            Init::Warm(list) => Ok(list.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub epoch: usize,
    pub start: usize,
    pub q: f64,
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub theta_hat: Direction,
    pub q_hat: f64,
    pub start_index: usize,
    /// Final criterion value of every start (`NaN` for failed starts).
    pub start_values: Vec<f64>,
    pub trace: Option<Vec<TraceRow>>,
}

struct StartOutcome {
    theta: Option<Direction>,
    q: f64,
    trace: Vec<TraceRow>,
}

fn run_start(
    spec: &CriterionSpec,
    config: &OptimizerConfig,
    start: usize,
    init: &Direction,
) -> StartOutcome {
    let mut theta = init.to_vec();
    let mut adam = Adam::new(config.adam(), theta.len());
    let mut trace = Vec::new();
    for epoch in 0..config.epochs {
        let (value, mut grad) = spec.value_and_subgradient(&theta);
        if config.record_trace {
            trace.push(TraceRow {
                epoch,
                start,
                q: value.q,
                theta: theta.clone(),
            });
        }
        if !value.q.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return StartOutcome {
                theta: None,
                q: f64::NAN,
                trace,
            };
        }
        if config.tangent_projection {
            let radial = dot(&grad, &theta);
            grad.iter_mut().zip(&theta).for_each(|(g, t)| *g -= radial * t);
        }
        adam.ascend(&mut theta, &grad);
        match normalize(&theta) {
            Ok(t) => theta = t.into_vec(),
            Err(_) => {
                return StartOutcome {
                    theta: None,
                    q: f64::NAN,
                    trace,
                }
            }
        }
    }
    let q = spec.value(&theta).q;
    if config.record_trace {
        trace.push(TraceRow {
            epoch: config.epochs,
            start,
            q,
            theta: theta.clone(),
        });
    }
    let theta = if q.is_finite() {
        normalize(&theta).ok()
    } else {
        None
    };
    StartOutcome { theta, q, trace }
}

/// Maximize `Q̂` over the sphere. The best final value wins; ties go to the
/// lowest start index.
pub fn projected_adam(spec: &CriterionSpec, config: &OptimizerConfig) -> Result<OptResult> {
    projected_adam_with(spec, config, false)
}

/// As [`projected_adam`], optionally running the starts on the rayon pool.
pub fn projected_adam_with(
    spec: &CriterionSpec,
    config: &OptimizerConfig,
    parallel: bool,
) -> Result<OptResult> {
    config.validate()?;
    let starts = config.starts(spec.d())?;
    if let Some(bad) = starts.iter().find(|s| s.dim() != spec.d()) {
        return Err(RmsError::DimensionMismatch {
            expected: spec.d(),
            got: bad.dim(),
        });
    }
    let outcomes: Vec<StartOutcome> = if parallel {
        starts
            .par_iter()
            .enumerate()
            .map(|(k, s)| run_start(spec, config, k, s))
            .collect()
    } else {
        starts
            .iter()
            .enumerate()
            .map(|(k, s)| run_start(spec, config, k, s))
            .collect()
    };

    let mut best: Option<(usize, f64)> = None;
    for (k, o) in outcomes.iter().enumerate() {
        if o.theta.is_some() && best.is_none_or(|(_, q)| o.q > q) {
            best = Some((k, o.q));
        }
    }
    let (start_index, q_hat) = best.ok_or(RmsError::OptimizationFailed {
        starts: outcomes.len(),
    })?;
    let start_values = outcomes.iter().map(|o| o.q).collect();
    let trace = config
        .record_trace
        .then(|| outcomes.iter().flat_map(|o| o.trace.iter().cloned()).collect());
    let theta_hat = outcomes
        .into_iter()
        .nth(start_index)
        .and_then(|o| o.theta)
        .expect("best start has a direction");
    Ok(OptResult {
        theta_hat,
        q_hat,
        start_index,
        start_values,
        trace,
    })
}

/// Per-epoch trace as CSV: `epoch,start,q,theta_1..theta_d`.
pub fn write_trace_csv<W: Write>(out: W, trace: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let d = trace.first().map_or(0, |r| r.theta.len());
    let mut header = vec!["epoch".to_string(), "start".into(), "q".into()];
    header.extend((1..=d).map(|k| format!("theta_{k}")));
    w.write_record(&header)?;
    for r in trace {
        let mut row = vec![r.epoch.to_string(), r.start.to_string(), r.q.to_string()];
        row.extend(r.theta.iter().map(|x| x.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
