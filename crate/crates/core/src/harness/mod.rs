//! Monte Carlo experiments: replicate an estimator over fresh samples and
//! summarize the spread of `θ̂` around `θ₀`.

mod metrics;
mod report;

use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use metrics::{compute_metrics, Metrics};
pub use report::{emit_report, write_csv, write_json, write_markdown, ReportFormat};

use crate::criterion::{CriterionSpec, OracleH0};
use crate::dgp::{generate_dataset, Dataset, DgpSpec};
use crate::direction::Direction;
use crate::error::{config_err, Result, RmsError};
use crate::first_stage::{FirstStageSpec, KernelRidgeSpec, KernelSpec, MlpSpec, SeriesSpec};
use crate::joint_dnn::{fit_joint_from_seed, JointTrainConfig};
use crate::optimizer::{projected_adam, OptimizerConfig};
use crate::rng::derive_seed;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "RMS_THREADS";

/// Share of failed replications above which an experiment is an error.
pub const MAX_FAILURE_SHARE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Estimator {
    TwoStageKernel {
        #[serde(default)]
        kernel: KernelSpec,
        #[serde(default)]
        optimizer: OptimizerConfig,
    },
    TwoStageSeries {
        #[serde(default)]
        series: SeriesSpec,
        #[serde(default)]
        optimizer: OptimizerConfig,
    },
    TwoStageMlp {
        #[serde(default)]
        mlp: MlpSpec,
        #[serde(default)]
        optimizer: OptimizerConfig,
    },
    TwoStageKernelRidge {
        #[serde(default)]
        ridge: KernelRidgeSpec,
        #[serde(default)]
        optimizer: OptimizerConfig,
    },
    TwoStageOracle {
        #[serde(default)]
        optimizer: OptimizerConfig,
    },
    JointDnn {
        #[serde(default)]
        joint: JointTrainConfig,
    },
}

impl Estimator {
    fn first_stage(&self) -> Option<FirstStageSpec> {
        match self {
            Estimator::TwoStageKernel { kernel, .. } => Some(FirstStageSpec::Kernel(*kernel)),
            Estimator::TwoStageSeries { series, .. } => Some(FirstStageSpec::Series(*series)),
            Estimator::TwoStageMlp { mlp, .. } => Some(FirstStageSpec::Mlp(*mlp)),
            Estimator::TwoStageKernelRidge { ridge, .. } => Some(FirstStageSpec::KernelRidge(*ridge)),
            Estimator::TwoStageOracle { .. } | Estimator::JointDnn { .. } => None,
        }
    }

    fn optimizer(&self) -> Option<&OptimizerConfig> {
        match self {
            Estimator::TwoStageKernel { optimizer, .. }
            | Estimator::TwoStageSeries { optimizer, .. }
            | Estimator::TwoStageMlp { optimizer, .. }
            | Estimator::TwoStageKernelRidge { optimizer, .. }
            | Estimator::TwoStageOracle { optimizer } => Some(optimizer),
            Estimator::JointDnn { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(opt) = self.optimizer() {
            opt.validate()?;
        }
        match self {
            Estimator::TwoStageKernel { kernel, .. } => kernel.family.validate(),
            Estimator::TwoStageMlp { mlp, .. } => mlp.validate(),
            Estimator::JointDnn { joint } => joint.validate(),
            _ => Ok(()),
        }
    }

    /// Estimate `θ` on one sample. `stream_seed` feeds every stochastic step.
    pub fn estimate(&self, data: &Dataset, dgp: &DgpSpec, stream_seed: u64) -> Result<Direction> {
        if let Estimator::JointDnn { joint } = self {
            let config = JointTrainConfig {
                seed: derive_seed(stream_seed, &[3]),
                ..*joint
            };
            return Ok(fit_joint_from_seed(data, &config)?.theta_hat);
        }
        let optimizer = OptimizerConfig {
            seed: derive_seed(stream_seed, &[2]),
            ..self.optimizer().expect("two-stage estimator").clone()
        };
        let result = match self.first_stage() {
            Some(fs) => {
                let fitted = fs.with_seed(derive_seed(stream_seed, &[1])).fit(data)?;
                projected_adam(&CriterionSpec::new(data, &fitted), &optimizer)?
            }
            None => {
                let oracle = OracleH0 {
                    design: dgp.design,
                    theta0: dgp.theta0.clone(),
                };
                projected_adam(&CriterionSpec::new(data, &oracle), &optimizer)?
            }
        };
        Ok(result.theta_hat)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Design, `θ₀` and covariate support; `n` and `seed` are set per cell.
    #[serde(default)]
    pub dgp: DgpSpec,
    pub sample_sizes: Vec<usize>,
    pub estimator: Estimator,
    pub replications: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Replace `θ̂` by `−θ̂` when `θ̂'θ₀ < 0` before computing metrics.
    #[serde(default)]
    pub flip_to_theta0: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return config_err("replications must be at least 1");
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.contains(&0) {
            return config_err("sample_sizes must be a nonempty list of positive sizes");
        }
        DgpSpec {
            n: self.sample_sizes[0],
            ..self.dgp.clone()
        }
        .validate()?;
        self.estimator.validate()
    }

    /// Data seed for replication `rep` at sample size `n`.
    pub fn replication_seed(&self, n: usize, rep: usize) -> u64 {
        derive_seed(self.master_seed, &[n as u64, rep as u64])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub replication: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeStats {
    pub total_seconds: f64,
    pub mean_seconds: f64,
    pub max_seconds: f64,
}

/// Results at one sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub n: usize,
    /// Successful estimates in replication order.
    pub estimates: Vec<Direction>,
    pub failures: Vec<FailureRecord>,
    pub metrics: Metrics,
    pub runtime: RuntimeStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub config: ExperimentConfig,
    pub cells: Vec<CellReport>,
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let threads: usize = v
            .parse()
            .ok()
            .filter(|&t| t > 0)
            .ok_or_else(|| RmsError::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
        builder = builder.num_threads(threads);
    }
    builder
        .build()
        .map_err(|e| RmsError::Config(format!("thread pool: {e}")))
}

struct Replication {
    estimate: Result<Direction>,
    seconds: f64,
}

fn run_replication(config: &ExperimentConfig, n: usize, rep: usize) -> Replication {
    let start = Instant::now();
    let seed = config.replication_seed(n, rep);
    let dgp = DgpSpec {
        n,
        seed,
        ..config.dgp.clone()
    };
    let estimate = generate_dataset(&dgp).and_then(|data| config.estimator.estimate(&data, &dgp, seed));
    Replication {
        estimate,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Run every `(n, replication)` pair. Replications run in parallel and are
/// aggregated in replication order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<McReport> {
    config.validate()?;
    let pool = thread_pool()?;
    let mut cells = Vec::with_capacity(config.sample_sizes.len());
    for &n in &config.sample_sizes {
        let reps: Vec<Replication> = pool.install(|| {
            (0..config.replications)
                .into_par_iter()
                .map(|r| run_replication(config, n, r))
                .collect()
        });
        let mut estimates = Vec::new();
        let mut failures = Vec::new();
        let mut total = 0.0;
        let mut max: f64 = 0.0;
        for (r, rep) in reps.into_iter().enumerate() {
            total += rep.seconds;
            max = max.max(rep.seconds);
            match rep.estimate {
                Ok(theta) => estimates.push(theta),
                Err(e) => failures.push(FailureRecord {
                    replication: r,
                    message: e.to_string(),
                }),
            }
        }
        if failures.len() as f64 > MAX_FAILURE_SHARE * config.replications as f64 {
            return Err(RmsError::ExperimentFailed {
                n,
                failures: failures.len(),
                total: config.replications,
            });
        }
        let metric_input: Vec<Direction> = if config.flip_to_theta0 {
            estimates
                .iter()
                .map(|t| if t.cos_angle(&config.dgp.theta0) < 0.0 { t.flipped() } else { t.clone() })
                .collect()
        } else {
            estimates.clone()
        };
        let metrics = compute_metrics(&metric_input, &config.dgp.theta0)?;
        cells.push(CellReport {
            n,
            estimates,
            failures,
            metrics,
            runtime: RuntimeStats {
                total_seconds: total,
                mean_seconds: total / config.replications as f64,
                max_seconds: max,
            },
        });
    }
    Ok(McReport {
        config: config.clone(),
        cells,
    })
}

/// Settings for estimating `θ` on one external sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateConfig {
    pub estimator: Estimator,
    /// Used by the oracle estimator only.
    #[serde(default)]
    pub dgp: DgpSpec,
    /// Known covariate support, if any.
    #[serde(default)]
    pub support: Option<(f64, f64)>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateOutput {
    pub theta_hat: Direction,
    pub n: usize,
    pub num_indexes: usize,
    pub d: usize,
}

fn parse_column(name: &str) -> Option<(usize, usize)> {
    let rest = name.trim().strip_prefix("x_")?;
    let (j, k) = rest.split_once('_')?;
    Some((j.parse().ok()?, k.parse().ok()?))
}

/// Read a sample with header `x_1_1,…,x_J_d,y` (any column order) and binary
/// `y`; the response is centered by `2^{−J}`.
pub fn read_observations<R: std::io::Read>(input: R, support: Option<(f64, f64)>) -> Result<Dataset> {
    let mut reader = csv::Reader::from_reader(input);
    let header = reader.headers()?.clone();
    let mut y_col = None;
    let mut cols = Vec::new();
    for (c, name) in header.iter().enumerate() {
        if name.trim() == "y" {
            y_col = Some(c);
        } else if let Some((j, k)) = parse_column(name) {
            cols.push((j, k, c));
        } else {
            return config_err(format!("unexpected column {name:?}"));
        }
    }
    let y_col = y_col.ok_or_else(|| RmsError::Config("missing y column".into()))?;
    let num_indexes = cols.iter().map(|c| c.0).max().unwrap_or(0);
    let d = cols.iter().map(|c| c.1).max().unwrap_or(0);
    if num_indexes == 0 || d == 0 || cols.len() != num_indexes * d || cols.iter().any(|c| c.0 == 0 || c.1 == 0) {
        return config_err("covariate columns must be exactly x_1_1..x_J_d");
    }
    cols.sort_unstable();
    let centering = crate::dgp::centering_for(num_indexes);
    let mut x = Vec::new();
    let mut y_centered = Vec::new();
    for record in reader.records() {
        let record = record?;
        let field = |c: usize| -> Result<f64> {
            record[c]
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| RmsError::Config(format!("bad number {:?}", &record[c])))
        };
        for &(_, _, c) in &cols {
            x.push(field(c)?);
        }
        let y = field(y_col)?;
        if y != 0.0 && y != 1.0 {
            return config_err(format!("y must be 0 or 1, got {y}"));
        }
        y_centered.push(y - centering);
    }
    Dataset::new(x, y_centered, centering, num_indexes, d, support)
}

/// Estimate `θ` on an external sample.
pub fn estimate_observations(data: &Dataset, config: &EstimateConfig) -> Result<EstimateOutput> {
    config.estimator.validate()?;
    if matches!(config.estimator, Estimator::TwoStageOracle { .. }) {
        config.dgp.validate()?;
        if config.dgp.d != data.d || config.dgp.design.num_indexes() != data.num_indexes {
            return Err(RmsError::DimensionMismatch {
                expected: data.width(),
                got: config.dgp.d * config.dgp.design.num_indexes(),
            });
        }
    }
    let theta_hat = config.estimator.estimate(data, &config.dgp, config.seed)?;
    Ok(EstimateOutput {
        theta_hat,
        n: data.n(),
        num_indexes: data.num_indexes,
        d: data.d,
    })
}
