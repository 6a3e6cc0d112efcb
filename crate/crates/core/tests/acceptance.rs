//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

mod common;

use std::process::Command;
use std::time::Instant;

use rand::Rng;
use rms_core::criterion::{criterion_subgradient, kink_margin, CriterionSpec, OracleH0};
use rms_core::dgp::{generate_dataset, true_h0, DgpSpec, Design};
use rms_core::first_stage::KernelSpec;
use rms_core::first_stage::MlpSpec;
use rms_core::harness::{run_experiment, Estimator, ExperimentConfig, McReport};
use rms_core::hyperplane::{
    compute_v, hausdorff_integral, integrate_profile, kernel_profile_g, BoxSupport, QuadratureSpec, SurfaceSpec,
    RANK_TOL,
};
use rms_core::joint_dnn::JointTrainConfig;
use rms_core::optimizer::OptimizerConfig;
use rms_core::Direction;

use common::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn experiment(design: Design, sizes: &[usize], estimator: Estimator, reps: usize, seed: u64) -> McReport {
    let config = ExperimentConfig {
        dgp: DgpSpec {
            design,
            ..Default::default()
        },
        sample_sizes: sizes.to_vec(),
        estimator,
        replications: reps,
        master_seed: seed,
        output_dir: None,
        flip_to_theta0: false,
    };
    run_experiment(&config).expect("experiment runs")
}

fn kernel() -> Estimator {
    Estimator::TwoStageKernel {
        kernel: KernelSpec::default(),
        optimizer: OptimizerConfig::default(),
    }
}

fn mean_error(report: &McReport, cell: usize) -> f64 {
    report.cells[cell].metrics.one_minus_mean_ang
}

fn oracle_second_stage() -> Outcome {
    let start = Instant::now();
    let report = experiment(
        Design::SingleIndex,
        &[5000],
        Estimator::TwoStageOracle {
            optimizer: OptimizerConfig::default(),
        },
        50,
        1,
    );
    let secs = start.elapsed().as_secs_f64();
    let err = mean_error(&report, 0);
    outcome(err < 1e-3 && secs < 120.0, format!("1-mean ang {err:.3e}, {secs:.1}s"))
}

fn kernel_band() -> Outcome {
    let start = Instant::now();
    let report = experiment(Design::SingleIndex, &[1000, 5000], kernel(), 200, 2);
    let secs = start.elapsed().as_secs_f64();
    let (small, large) = (mean_error(&report, 0), mean_error(&report, 1));
    let pass = (0.0012..=0.011).contains(&large) && (0.002..=0.018).contains(&small) && secs < 1200.0;
    outcome(pass, format!("n=1000 {small:.6}, n=5000 {large:.6}, {secs:.0}s"))
}

fn network_band() -> Outcome {
    let mlp = experiment(
        Design::SingleIndex,
        &[5000],
        Estimator::TwoStageMlp {
            mlp: MlpSpec::default(),
            optimizer: OptimizerConfig::default(),
        },
        100,
        3,
    );
    let joint = experiment(
        Design::SingleIndex,
        &[5000],
        Estimator::JointDnn {
            joint: JointTrainConfig::default(),
        },
        100,
        3,
    );
    let (a, b) = (mean_error(&mlp, 0), mean_error(&joint, 0));
    outcome(a < 0.012 && b < 0.012, format!("two-stage MLP {a:.6}, joint {b:.6}"))
}

fn two_index_improves() -> Outcome {
    let report = experiment(
        Design::TwoIndex,
        &[1000, 5000],
        Estimator::TwoStageMlp {
            mlp: MlpSpec::default(),
            optimizer: OptimizerConfig::default(),
        },
        100,
        4,
    );
    let (small, large) = (mean_error(&report, 0), mean_error(&report, 1));
    outcome(large <= small / 3.0, format!("n=1000 {small:.6}, n=5000 {large:.6}, ratio {:.3}", large / small))
}

fn kernel_rate() -> Outcome {
    let sizes = [500, 1000, 2000, 5000];
    let report = experiment(Design::SingleIndex, &sizes, kernel(), 100, 5);
    let xs: Vec<f64> = sizes.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = report.cells.iter().map(|c| c.metrics.one_minus_median_ang.ln()).collect();
    let mx = xs.iter().sum::<f64>() / 4.0;
    let my = ys.iter().sum::<f64>() / 4.0;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    outcome((-1.2..=-0.4).contains(&slope), format!("slope {slope:.3}"))
}

fn subgradient_suite() -> Outcome {
    let mut r = rng(6);
    let mut worst = 0.0f64;
    let mut accepted = 0;
    let mut tried = 0;
    while accepted < 1000 {
        tried += 1;
        let j = r.random_range(1..4);
        let d = r.random_range(2..6);
        let n = r.random_range(1..20);
        let data = random_dataset(&mut r, n, j, d);
        let h: Vec<f64> = (0..n).map(|_| r.random_range(-0.75..0.75)).collect();
        let theta = random_unit(&mut r, d);
        let spec = CriterionSpec::from_values(&data, h).unwrap();
        if kink_margin(&spec, &theta) <= 1e-3 {
            continue;
        }
        let g = criterion_subgradient(&spec, &theta);
        let fd = central_diff(&|t| spec.value(t).q, &theta, 1e-6);
        worst = worst.max(rel_err(&g, &fd, 1e-6));
        accepted += 1;
    }
    outcome(worst < 1e-5, format!("max rel err {worst:.2e} over 1000 configs ({tried} drawn)"))
}

fn gradient_suite() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..20 {
        worst = worst.max(mlp_gradient_error(seed, 3, 10, 2));
        worst = worst.max(network_gradient_error(seed, 5, 1 + seed as usize % 2, 3));
        worst = worst.max(layer_gradient_error(seed, 1 + seed as usize % 3, 3));
    }
    outcome(worst < 1e-4, format!("max rel err {worst:.2e}"))
}

fn hyperplane_suite() -> Outcome {
    let quad = QuadratureSpec::default();
    let cube = BoxSupport::new(-2.0, 2.0).unwrap();
    let mut notes = Vec::new();
    let mut pass = true;

    let area = hausdorff_integral(&|_| 1.0, &Direction::axis(3, 0), 0.0, cube, &quad).unwrap().value[0];
    pass &= (area - 16.0).abs() < 1e-10;
    notes.push(format!("area {area:.12}"));

    let spec = SurfaceSpec::default();
    let t0 = spec.dgp.theta0.clone();
    let v = compute_v(&spec).unwrap();
    let null = v.apply(&t0).iter().map(|x| x * x).sum::<f64>().sqrt();
    let eig = v.eigenvalues();
    let rank = v.numerical_rank(RANK_TOL);
    pass &= null < 1e-8 && eig[0] >= -1e-8 * v.matrix.trace() && rank == 2;
    notes.push(format!("|V θ0| {null:.1e}, rank {rank}"));

    let indicator = |x: &[f64]| if x.iter().all(|v| v.abs() <= 2.0) { 1.0 } else { 0.0 };
    let quad_value = hausdorff_integral(&indicator, &t0, 0.0, cube, &quad).unwrap().value[0];
    let (slab, se) = slab_integral(&|x, out| out[0] = indicator(x), 1, &t0, 0.0, -2.0, 2.0, 10_000_000, 1e-3, 8);
    let z_area = (quad_value - slab[0]).abs() / se[0];
    let p = spec.dgp.block_density();
    let (slab_v, se_v) = slab_integral(
        &|x, out| {
            for i in 0..3 {
                for j in 0..3 {
                    out[i * 3 + j] = 0.2 * p * x[i] * x[j];
                }
            }
        },
        9,
        &t0,
        0.0,
        -2.0,
        2.0,
        10_000_000,
        1e-3,
        9,
    );
    let z_v = (0..9)
        .map(|k| (v.matrix[(k / 3, k % 3)] - slab_v[k]).abs() / se_v[k])
        .fold(0.0, f64::max);
    pass &= z_area <= 3.0 && z_v <= 3.0;
    notes.push(format!("slab z {z_area:.2}/{z_v:.2}"));

    let family = rms_core::first_stage::KernelFamily::GaussianProduct;
    let profile = integrate_profile(family, &t0, 0, &quad).unwrap();
    let phi = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let dev = (0..=40)
        .map(|k| {
            let t = -4.0 + 0.2 * k as f64;
            (kernel_profile_g(family, &t0, t, &quad).unwrap() - phi(t)).abs()
        })
        .fold(0.0, f64::max);
    pass &= (profile.integral - 1.0).abs() < 1e-6 && dev < 1e-6;
    notes.push(format!("∫G-1 {:.1e}, |G-φ| {dev:.1e}", profile.integral - 1.0));
    outcome(pass, notes.join(", "))
}

fn criterion_bounds() -> Outcome {
    let mut r = rng(10);
    let mut worst_excess = f64::NEG_INFINITY;
    for _ in 0..10_000 {
        let j = r.random_range(1..4);
        let d = r.random_range(1..5);
        let n = r.random_range(1..30);
        let data = random_dataset(&mut r, n, j, d);
        let h: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let theta = random_unit(&mut r, d);
        let spec = CriterionSpec::from_values(&data, h).unwrap();
        worst_excess = worst_excess.max(spec.value(&theta).q - spec.upper_bound());
    }
    let mut worst_gap = 0.0f64;
    for design in [Design::SingleIndex, Design::TwoIndex] {
        let dgp = DgpSpec {
            design,
            n: 5000,
            seed: 11,
            ..Default::default()
        };
        let data = generate_dataset(&dgp).unwrap();
        let oracle = OracleH0 {
            design,
            theta0: dgp.theta0.clone(),
        };
        let q = CriterionSpec::new(&data, &oracle).value(&dgp.theta0).q;
        let direct = (0..data.n())
            .map(|i| true_h0(design, data.block(i), &dgp.theta0).unwrap().abs())
            .sum::<f64>()
            / data.n() as f64;
        worst_gap = worst_gap.max((q - direct).abs());
    }
    outcome(
        worst_excess <= 1e-12 && worst_gap <= 1e-12,
        format!("max Q-bound {worst_excess:.1e}, |Q(θ0)-mean|h0|| {worst_gap:.1e}"),
    )
}

fn cli_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sim.json");
    std::fs::write(
        &config,
        r#"{"sample_sizes": [300, 600], "replications": 5, "master_seed": 12,
            "estimator": {"kind": "two_stage_mlp", "mlp": {"epochs": 20}, "optimizer": {"epochs": 100}}}"#,
    )
    .unwrap();
    let mut csvs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let run = Command::new(env!("CARGO_BIN_EXE_rms"))
            .args(["simulate", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .output()
            .unwrap();
        if !run.status.success() {
            return outcome(false, format!("simulate exited with {}", run.status));
        }
        csvs.push(std::fs::read(out.join("report.csv")).unwrap());
    }
    outcome(csvs[0] == csvs[1], format!("{} bytes", csvs[0].len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("oracle second stage", oracle_second_stage),
        ("kernel first stage band", kernel_band),
        ("neural first stage and joint network band", network_band),
        ("two-index improvement with n", two_index_improves),
        ("kernel rate slope", kernel_rate),
        ("criterion subgradient", subgradient_suite),
        ("network gradients", gradient_suite),
        ("hyperplane integrals", hyperplane_suite),
        ("criterion bounds", criterion_bounds),
        ("simulate determinism", cli_determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let label = format!("criterion {}", k + 1);
        if !filter.is_empty() && !filter.iter().any(|f| label.ends_with(f.as_str()) || name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = check();
        let took = start.elapsed().as_secs_f64();
        let verdict = if result.pass { "PASS" } else { "FAIL" };
        println!("{label} [{name}]: {verdict} ({}; {took:.1}s)", result.detail);
        if !result.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
