//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rms_core::dgp::Dataset;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn unit(v: &[f64]) -> Vec<f64> {
    let n = dot(v, v).sqrt();
    v.iter().map(|x| x / n).collect()
}

pub fn random_unit(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = dot(&v, &v);
        if n > 0.01 && n <= 1.0 {
            return unit(&v);
        }
    }
}

/// Random sample with covariates in `[−2, 2]` and arbitrary centered labels.
pub fn random_dataset(rng: &mut impl Rng, n: usize, j: usize, d: usize) -> Dataset {
    let x: Vec<f64> = (0..n * j * d).map(|_| rng.random_range(-2.0..2.0)).collect();
    let c = 0.5f64.powi(j as i32);
    let y: Vec<f64> = (0..n)
        .map(|_| if rng.random_bool(0.5) { 1.0 - c } else { -c })
        .collect();
    Dataset::new(x, y, c, j, d, Some((-2.0, 2.0))).unwrap()
}

/// Single-index penalty terms written directly from their definition.
pub fn single_index_terms(theta: &[f64], h: f64, x: &[f64]) -> (f64, f64) {
    let s = dot(x, theta);
    ((h - (-s).max(0.0)).max(0.0), (-h - s.max(0.0)).max(0.0))
}

/// `Q̂(θ)` evaluated term by term, without the library's branch bookkeeping.
pub fn brute_criterion(theta: &[f64], h: &[f64], data: &Dataset) -> f64 {
    let d = theta.len();
    let mut total = 0.0;
    for i in 0..data.n() {
        let x = data.block(i);
        let s: Vec<f64> = x.chunks(d).map(|xj| dot(xj, theta)).collect();
        let u = s.iter().map(|v| (-v).max(0.0)).fold(f64::INFINITY, f64::min);
        let v = s.iter().map(|v| v.max(0.0)).fold(f64::INFINITY, f64::min);
        total += (h[i] - u).max(0.0) + (-h[i] - v).max(0.0);
    }
    total / data.n() as f64
}

/// Central differences of `f` at `x`.
pub fn central_diff(f: &dyn Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|k| {
            p[k] = x[k] + step;
            let up = f(&p);
            p[k] = x[k] - step;
            let down = f(&p);
            p[k] = x[k];
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// `‖a − b‖∞ / max(‖b‖∞, floor)`.
pub fn rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = b.iter().map(|y| y.abs()).fold(floor, f64::max);
    diff / scale
}

/// Slab-sampling estimate of `∫_{x'θ=t} m dH` over the cube `[low, high]^D`:
/// `vol · E[m(x) 1{|x'θ − t| < δ}] / (2δ)` under uniform `x`. Returns the
/// estimate and its standard error per component.
pub fn slab_integral(
    m: &dyn Fn(&[f64], &mut [f64]),
    width: usize,
    theta: &[f64],
    t: f64,
    low: f64,
    high: f64,
    draws: usize,
    delta: f64,
    seed: u64,
) -> (Vec<f64>, Vec<f64>) {
    let mut r = rng(seed);
    let dim = theta.len();
    let vol = (high - low).powi(dim as i32);
    let scale = vol / (2.0 * delta);
    let mut sum = vec![0.0; width];
    let mut sum_sq = vec![0.0; width];
    let mut x = vec![0.0; dim];
    let mut buf = vec![0.0; width];
    for _ in 0..draws {
        for v in x.iter_mut() {
            *v = r.random_range(low..high);
        }
        if (dot(&x, theta) - t).abs() >= delta {
            continue;
        }
        m(&x, &mut buf);
        for c in 0..width {
            let v = scale * buf[c];
            sum[c] += v;
            sum_sq[c] += v * v;
        }
    }
    let n = draws as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let se = (0..width)
        .map(|c| ((sum_sq[c] / n - mean[c] * mean[c]).max(0.0) / (n - 1.0)).sqrt())
        .collect();
    (mean, se)
}

/// Relative error between the analytic MLP gradient and central differences
/// over every parameter, on a random sample.
pub fn mlp_gradient_error(seed: u64, input: usize, width: usize, layers: usize) -> f64 {
    use rms_core::first_stage::mlp::ForwardCache;
    use rms_core::first_stage::Mlp;
    let mut r = rng(seed);
    let mut mlp = Mlp::new(input, width, layers, &mut r);
    for p in mlp.params_mut() {
        *p += r.random_range(-0.1..0.1);
    }
    let n = 5;
    let xs: Vec<f64> = (0..n * input).map(|_| r.random_range(-2.0..2.0)).collect();
    let ys: Vec<f64> = (0..n).map(|_| r.random_range(-0.5..0.5)).collect();
    let rows: Vec<usize> = (0..n).collect();
    let mut grad = vec![0.0; mlp.n_params()];
    mlp.mse_and_grad(&xs, &ys, &rows, &mut grad, &mut ForwardCache::default());
    let fd = central_diff(
        &|p| {
            let m = Mlp::from_parts(mlp.sizes().to_vec(), p.to_vec()).unwrap();
            m.mse(&xs, &ys)
        },
        mlp.params(),
        1e-6,
    );
    rel_err(&grad, &fd, 1e-8)
}

/// Relative error of the joint network's (β, θ) gradient against central
/// differences on a small sample.
pub fn network_gradient_error(seed: u64, n: usize, j: usize, d: usize) -> f64 {
    use rms_core::first_stage::mlp::ForwardCache;
    use rms_core::first_stage::Mlp;
    use rms_core::joint_dnn::RmsNetwork;
    use rms_core::rng::stream;
    let mut r = rng(seed);
    let data = random_dataset(&mut r, n, j, d);
    let mut net = RmsNetwork::new(j, d, 6, 2, &mut stream(seed));
    // zero biases put the output exactly on a kink when hidden units are dead
    for p in net.mlp.params_mut() {
        *p += r.random_range(-0.1..0.1);
    }
    let rows: Vec<usize> = (0..n).collect();
    let mut gb = vec![0.0; net.mlp.n_params()];
    let mut gt = vec![0.0; d];
    net.loss_and_grads(&data, &rows, &mut gb, &mut gt, &mut ForwardCache::default());
    let fd_beta = central_diff(
        &|p| {
            let mut m = net.clone();
            m.mlp = Mlp::from_parts(net.mlp.sizes().to_vec(), p.to_vec()).unwrap();
            m.mse(&data)
        },
        net.mlp.params(),
        1e-6,
    );
    // θ is perturbed off the sphere; the loss is defined for any vector
    let fd_theta = central_diff(
        &|t| {
            (0..n)
                .map(|i| {
                    let x = data.block(i);
                    let f = net.mlp.predict(x);
                    let (p, m) = rms_core::joint_dnn::rms_layer_forward(f, x, t);
                    (p - m - data.y_centered[i]).powi(2)
                })
                .sum::<f64>()
                / n as f64
        },
        &net.theta,
        1e-6,
    );
    rel_err(&gb, &fd_beta, 1e-8).max(rel_err(&gt, &fd_theta, 1e-8))
}

/// Relative error of the layer's input gradients at a random point.
pub fn layer_gradient_error(seed: u64, j: usize, d: usize) -> f64 {
    use rms_core::criterion::layer_terms;
    use rms_core::joint_dnn::{rms_layer_backward, rms_layer_forward};
    let mut r = rng(seed);
    let x: Vec<f64> = (0..j * d).map(|_| r.random_range(-2.0..2.0)).collect();
    let theta = random_unit(&mut r, d);
    let h = r.random_range(-1.0..1.0);
    let (a, b) = (r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
    let loss = |h: f64, t: &[f64]| {
        let (p, m) = rms_layer_forward(h, &x, t);
        a * p + b * m
    };
    let g = rms_layer_backward(&layer_terms(&theta, h, &x), &x, d, a, b);
    let mut input = vec![h];
    input.extend_from_slice(&theta);
    let fd = central_diff(&|v| loss(v[0], &v[1..]), &input, 1e-6);
    let mut analytic = vec![g.d_h];
    analytic.extend_from_slice(&g.d_theta);
    rel_err(&analytic, &fd, 1e-8)
}
