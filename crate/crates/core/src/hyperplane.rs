//! Integrals over hyperplane slices `{x : x'θ = t}` of a covariate box.
//!
//! A slice is parametrized by an orthonormal frame `T = [θ, e₂, …, e_d]`:
//! `x = tθ + Σ_k u_k e_{k+1}`, so the `(d−1)`-dimensional Hausdorff measure
//! on the slice is Lebesgue measure in `u`. The slice of a box is a convex
//! polytope in `u`; it is integrated by iterated Gauss–Legendre rules with
//! breakpoints at the projections of its vertices, which makes polynomial
//! integrands exact. Above [`MAX_QUADRATURE_DIM`] ambient dimensions the
//! integral falls back to Monte Carlo.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dgp::{logistic_cdf, DgpSpec, Design};
use crate::direction::{dot, Direction};
use crate::error::{config_err, Result, RmsError};
use crate::first_stage::KernelFamily;
use crate::rng::stream;

/// Largest ambient dimension integrated by quadrature.
pub const MAX_QUADRATURE_DIM: usize = 4;

const FEASIBILITY_TOL: f64 = 1e-12;

/// Orthonormal frame whose first column is `θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordFrame {
    theta: Direction,
    matrix: DMatrix<f64>,
}

/// Householder completion of `θ` to an orthonormal basis. `θ = e₁` gives the
/// identity.
pub fn orthonormal_complement(theta: &Direction) -> CoordFrame {
    let d = theta.dim();
    let t1 = theta[0];
    let tail: f64 = theta[1..].iter().map(|v| v * v).sum();
    // v = e₁ − θ, with v₁ = 1 − θ₁ computed without cancellation
    let v1 = if t1 > 0.0 { tail / (1.0 + t1) } else { 1.0 - t1 };
    let mut matrix = DMatrix::identity(d, d);
    if v1 > 0.0 {
        let mut v = vec![v1];
        v.extend(theta[1..].iter().map(|x| -x));
        // H = I − v v' / v₁ since v'v = 2v₁
        for i in 0..d {
            for j in 0..d {
                matrix[(i, j)] -= v[i] * v[j] / v1;
            }
        }
        for i in 0..d {
            matrix[(i, 0)] = theta[i];
        }
    }
    CoordFrame {
        theta: theta.clone(),
        matrix,
    }
}

impl CoordFrame {
    pub fn theta(&self) -> &Direction {
        &self.theta
    }

    pub fn dim(&self) -> usize {
        self.theta.dim()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// `x = tθ + Σ u_k e_{k+1}`, written into `out`.
    pub fn point(&self, t: f64, u: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for i in 0..d {
            let mut x = t * self.matrix[(i, 0)];
            for (k, uk) in u.iter().enumerate() {
                x += uk * self.matrix[(i, k + 1)];
            }
            out[i] = x;
        }
    }
}

/// The cube `[low, high]^D` carrying the integrand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxSupport {
    pub low: f64,
    pub high: f64,
}

impl BoxSupport {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !(low < high) || !low.is_finite() || !high.is_finite() {
            return config_err("support box needs finite low < high");
        }
        Ok(Self { low, high })
    }

    fn contains(&self, x: &[f64]) -> bool {
        x.iter().all(|&v| v >= self.low && v <= self.high)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureSpec {
    /// Gauss–Legendre nodes per panel and dimension.
    pub nodes: usize,
    /// Equal panels per polytope piece.
    pub panels: usize,
    /// Draws for the Monte Carlo fallback.
    pub mc_draws: usize,
    pub seed: u64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            nodes: 64,
            panels: 1,
            mc_draws: 1_000_000,
            seed: 0,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.nodes == 0 || self.panels == 0 || self.mc_draws < 2 {
            return config_err("quadrature needs positive nodes and panels and at least 2 draws");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegrationMethod {
    Quadrature,
    MonteCarlo,
}

/// Componentwise integral of a vector-valued integrand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceEstimate {
    pub value: Vec<f64>,
    /// Monte Carlo standard errors; `None` for quadrature.
    pub std_error: Option<Vec<f64>>,
    /// Integrand evaluations used.
    pub evaluations: usize,
    pub method: IntegrationMethod,
}

/// Gauss–Legendre nodes and weights on `[−1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    (p1, n as f64 * (x * p1 - p0) / (x * x - 1.0))
}

struct Rule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    panels: usize,
}

impl Rule {
    fn new(q: &QuadratureSpec) -> Self {
        let (nodes, weights) = gauss_legendre(q.nodes);
        Self {
            nodes,
            weights,
            panels: q.panels,
        }
    }

    fn each(&self, lo: f64, hi: f64, mut f: impl FnMut(f64, f64)) {
        let step = (hi - lo) / self.panels as f64;
        for p in 0..self.panels {
            let a = lo + p as f64 * step;
            let half = 0.5 * step;
            let mid = a + half;
            for (x, w) in self.nodes.iter().zip(&self.weights) {
                f(mid + half * x, half * w);
            }
        }
    }
}

/// Region `{u : a_i·u ≤ b_i}`.
struct Polytope {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl Polytope {
    /// Drop constraints that no longer involve `u`; `None` if one is violated.
    fn prune(self) -> Option<Polytope> {
        let mut a = Vec::with_capacity(self.a.len());
        let mut b = Vec::with_capacity(self.b.len());
        for (row, bi) in self.a.into_iter().zip(self.b) {
            let scale = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if scale <= FEASIBILITY_TOL {
                if bi < -FEASIBILITY_TOL {
                    return None;
                }
            } else {
                a.push(row);
                b.push(bi);
            }
        }
        Some(Polytope { a, b })
    }

    fn dim(&self) -> usize {
        self.a.first().map_or(0, Vec::len)
    }

    fn interval(&self) -> Option<(f64, f64)> {
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for (row, &bi) in self.a.iter().zip(&self.b) {
            let c = row[0];
            if c > 0.0 {
                hi = hi.min(bi / c);
            } else {
                lo = lo.max(bi / c);
            }
        }
        (hi > lo && lo.is_finite() && hi.is_finite()).then_some((lo, hi))
    }

    /// Sorted distinct first coordinates of the vertices.
    fn vertex_breaks(&self) -> Vec<f64> {
        let k = self.dim();
        let m = self.a.len();
        let mut breaks = Vec::new();
        let mut idx: Vec<usize> = (0..k).collect();
        if m < k {
            return breaks;
        }
        loop {
            let sys = DMatrix::from_fn(k, k, |r, c| self.a[idx[r]][c]);
            let rhs = DVector::from_fn(k, |r, _| self.b[idx[r]]);
            if let Some(v) = sys.lu().solve(&rhs) {
                let feasible = v.iter().all(|x| x.is_finite())
                    && self.a.iter().zip(&self.b).all(|(row, &bi)| {
                        let s: f64 = row.iter().zip(v.iter()).map(|(r, x)| r * x).sum();
                        s <= bi + 1e-9 * (1.0 + bi.abs())
                    });
                if feasible {
                    breaks.push(v[0]);
                }
            }
            // next k-subset of 0..m in lexicographic order
            let mut i = k;
            while i > 0 && idx[i - 1] == m - k + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            idx[i - 1] += 1;
            for j in i..k {
                idx[j] = idx[j - 1] + 1;
            }
        }
        breaks.sort_by(f64::total_cmp);
        breaks.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
        breaks
    }

    fn fix_first(&self, s: f64) -> Polytope {
        Polytope {
            a: self.a.iter().map(|row| row[1..].to_vec()).collect(),
            b: self.a.iter().zip(&self.b).map(|(row, bi)| bi - row[0] * s).collect(),
        }
    }
}

fn visit_polytope(
    poly: Polytope,
    rule: &Rule,
    prefix: &mut Vec<f64>,
    weight: f64,
    f: &mut dyn FnMut(&[f64], f64),
) {
    let Some(poly) = poly.prune() else { return };
    if poly.a.is_empty() {
        return;
    }
    if poly.dim() == 1 {
        if let Some((lo, hi)) = poly.interval() {
            rule.each(lo, hi, |s, w| {
                prefix.push(s);
                f(prefix, weight * w);
                prefix.pop();
            });
        }
        return;
    }
    let breaks = poly.vertex_breaks();
    for piece in breaks.windows(2) {
        rule.each(piece[0], piece[1], |s, w| {
            prefix.push(s);
            visit_polytope(poly.fix_first(s), rule, prefix, weight * w, f);
            prefix.pop();
        });
    }
}

fn check_theta(theta: &Direction) -> Result<()> {
    if theta.dim() < 2 {
        return config_err("hyperplane integrals need at least two dimensions");
    }
    Ok(())
}

/// `∫_{x'θ=t} m(x) dH^{D−1}(x)` for a vector-valued `m` of length `width`,
/// with `m` taken as zero outside `support`.
pub fn hausdorff_integral_vec(
    m: &dyn Fn(&[f64], &mut [f64]),
    width: usize,
    theta: &Direction,
    t: f64,
    support: BoxSupport,
    quad: &QuadratureSpec,
) -> Result<SurfaceEstimate> {
    check_theta(theta)?;
    quad.validate()?;
    if theta.dim() > MAX_QUADRATURE_DIM {
        return hausdorff_integral_mc(m, width, theta, t, support, quad);
    }
    let frame = orthonormal_complement(theta);
    let d = theta.dim();
    let k = d - 1;
    // support bounds as constraints on u: low ≤ tθ_i + Σ_k T_{i,k+1} u_k ≤ high
    let mut a = Vec::with_capacity(2 * d);
    let mut b = Vec::with_capacity(2 * d);
    for i in 0..d {
        let row: Vec<f64> = (0..k).map(|c| frame.matrix[(i, c + 1)]).collect();
        let offset = t * theta[i];
        b.push(support.high - offset);
        a.push(row.clone());
        b.push(offset - support.low);
        a.push(row.into_iter().map(|v| -v).collect());
    }
    let rule = Rule::new(quad);
    let mut total = vec![0.0; width];
    let mut buf = vec![0.0; width];
    let mut x = vec![0.0; d];
    let mut evaluations = 0;
    let mut prefix = Vec::with_capacity(k);
    visit_polytope(Polytope { a, b }, &rule, &mut prefix, 1.0, &mut |u, w| {
        frame.point(t, u, &mut x);
        m(&x, &mut buf);
        evaluations += 1;
        for (s, v) in total.iter_mut().zip(&buf) {
            *s += w * v;
        }
    });
    Ok(SurfaceEstimate {
        value: total,
        std_error: None,
        evaluations,
        method: IntegrationMethod::Quadrature,
    })
}

/// Monte Carlo version of [`hausdorff_integral_vec`]: uniform draws of `u`
/// over a cube enclosing the slice.
pub fn hausdorff_integral_mc(
    m: &dyn Fn(&[f64], &mut [f64]),
    width: usize,
    theta: &Direction,
    t: f64,
    support: BoxSupport,
    quad: &QuadratureSpec,
) -> Result<SurfaceEstimate> {
    check_theta(theta)?;
    quad.validate()?;
    let frame = orthonormal_complement(theta);
    let d = theta.dim();
    let k = d - 1;
    let radius = theta
        .iter()
        .map(|&th| {
            let c = t * th;
            (support.low - c).powi(2).max((support.high - c).powi(2))
        })
        .sum::<f64>()
        .sqrt();
    let volume = (2.0 * radius).powi(k as i32);
    let mut rng = stream(quad.seed);
    let mut sum = vec![0.0; width];
    let mut sum_sq = vec![0.0; width];
    let mut buf = vec![0.0; width];
    let mut u = vec![0.0; k];
    let mut x = vec![0.0; d];
    let mut evaluations = 0;
    for _ in 0..quad.mc_draws {
        u.iter_mut().for_each(|v| *v = rng.random_range(-radius..radius));
        frame.point(t, &u, &mut x);
        if !support.contains(&x) {
            continue;
        }
        m(&x, &mut buf);
        evaluations += 1;
        for c in 0..width {
            sum[c] += buf[c];
            sum_sq[c] += buf[c] * buf[c];
        }
    }
    let n = quad.mc_draws as f64;
    let mut value = vec![0.0; width];
    let mut se = vec![0.0; width];
    for c in 0..width {
        let mean = sum[c] / n;
        let var = (sum_sq[c] / n - mean * mean).max(0.0) * n / (n - 1.0);
        value[c] = volume * mean;
        se[c] = volume * (var / n).sqrt();
    }
    Ok(SurfaceEstimate {
        value,
        std_error: Some(se),
        evaluations,
        method: IntegrationMethod::MonteCarlo,
    })
}

/// Scalar [`hausdorff_integral_vec`].
pub fn hausdorff_integral(
    m: &dyn Fn(&[f64]) -> f64,
    theta: &Direction,
    t: f64,
    support: BoxSupport,
    quad: &QuadratureSpec,
) -> Result<SurfaceEstimate> {
    hausdorff_integral_vec(&|x, out| out[0] = m(x), 1, theta, t, support, quad)
}

/// A symmetric surface matrix `∫ w(x) x_b x_b' dH`, with `x_b` one block of
/// the ambient vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMatrix {
    pub matrix: DMatrix<f64>,
    pub std_error: Option<DMatrix<f64>>,
    pub evaluations: usize,
    pub method: IntegrationMethod,
}

impl SurfaceMatrix {
    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.matrix.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Eigenvalues above `rel_tol · largest`.
    pub fn numerical_rank(&self, rel_tol: f64) -> usize {
        let ev = self.eigenvalues();
        let top = ev.last().copied().unwrap_or(0.0).abs();
        ev.iter().filter(|v| v.abs() > rel_tol * top).count()
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (&self.matrix * DVector::from_column_slice(v)).iter().copied().collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.matrix.nrows())
            .map(|r| self.matrix.row(r).iter().copied().collect())
            .collect()
    }
}

fn pack_upper(d: usize) -> Vec<(usize, usize)> {
    (0..d).flat_map(|i| (i..d).map(move |j| (i, j))).collect()
}

/// `∫_{x'normal=t} w(x) x_b x_b' dH`, where `x_b` is block `block` (width
/// `d`) of the ambient vector.
pub fn surface_moment_matrix(
    weight: &dyn Fn(&[f64]) -> f64,
    normal: &Direction,
    t: f64,
    block: usize,
    d: usize,
    support: BoxSupport,
    quad: &QuadratureSpec,
) -> Result<SurfaceMatrix> {
    if (block + 1) * d > normal.dim() {
        return Err(RmsError::DimensionMismatch {
            expected: (block + 1) * d,
            got: normal.dim(),
        });
    }
    let pairs = pack_upper(d);
    let off = block * d;
    let est = hausdorff_integral_vec(
        &|x, out| {
            let w = weight(x);
            for (o, &(i, j)) in out.iter_mut().zip(&pairs) {
                *o = w * x[off + i] * x[off + j];
            }
        },
        pairs.len(),
        normal,
        t,
        support,
        quad,
    )?;
    let unpack = |v: &[f64]| {
        let mut m = DMatrix::zeros(d, d);
        for (&(i, j), val) in pairs.iter().zip(v) {
            m[(i, j)] = *val;
            m[(j, i)] = *val;
        }
        m
    };
    Ok(SurfaceMatrix {
        matrix: unpack(&est.value),
        std_error: est.std_error.as_deref().map(unpack),
        evaluations: est.evaluations,
        method: est.method,
    })
}

/// Which surface factor multiplies `x x' p(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceWeight {
    /// `f(0|x) / (f(0|x) + 1)`.
    Hessian,
    /// `σ₀²(x) / (f(0|x) + 1)²`, before the `∫G²` factor.
    OmegaKernel,
    /// `1 / (f(0|x) + 1)`, the factor of `h(x) x p(x)` in `L(h)`.
    Linear,
}

/// Logistic density at zero, the conditional error density on the slice.
fn error_density_at_zero() -> f64 {
    let f = logistic_cdf(0.0);
    f * (1.0 - f)
}

impl SurfaceWeight {
    /// Factor at `x` for the single-index logistic design.
    pub fn factor(self, x: &[f64], theta0: &[f64]) -> f64 {
        let f0 = error_density_at_zero();
        match self {
            SurfaceWeight::Hessian => f0 / (f0 + 1.0),
            SurfaceWeight::OmegaKernel => {
                let p = logistic_cdf(dot(x, theta0));
                p * (1.0 - p) / ((f0 + 1.0) * (f0 + 1.0))
            }
            SurfaceWeight::Linear => 1.0 / (f0 + 1.0),
        }
    }
}

/// DGP and quadrature settings shared by the surface diagnostics.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SurfaceSpec {
    pub dgp: DgpSpec,
    pub quadrature: QuadratureSpec,
}

impl SurfaceSpec {
    fn single_index(&self) -> Result<BoxSupport> {
        self.dgp.validate()?;
        if self.dgp.design != Design::SingleIndex {
            return config_err("closed-form surface weights exist for the single-index design only");
        }
        BoxSupport::new(self.dgp.covariate_low, self.dgp.covariate_high)
    }
}

/// `∫_{x'θ₀=0} factor(x) x x' p(x) dH`.
pub fn surface_matrix(spec: &SurfaceSpec, weight: SurfaceWeight) -> Result<SurfaceMatrix> {
    let support = spec.single_index()?;
    let theta0 = &spec.dgp.theta0;
    let p = spec.dgp.block_density();
    surface_moment_matrix(
        &|x| weight.factor(x, theta0) * p,
        theta0,
        0.0,
        0,
        spec.dgp.d,
        support,
        &spec.quadrature,
    )
}

/// Hessian of the population criterion at `θ₀`.
pub fn compute_v(spec: &SurfaceSpec) -> Result<SurfaceMatrix> {
    surface_matrix(spec, SurfaceWeight::Hessian)
}

/// Variance of the first-stage functional for a kernel first stage.
pub fn compute_omega_kernel(spec: &SurfaceSpec, family: KernelFamily) -> Result<SurfaceMatrix> {
    let profile = integrate_profile(family, &spec.dgp.theta0, 0, &spec.quadrature)?;
    let mut out = surface_matrix(spec, SurfaceWeight::OmegaKernel)?;
    out.matrix *= profile.integral_sq;
    if let Some(se) = out.std_error.as_mut() {
        *se *= profile.integral_sq;
    }
    Ok(out)
}

/// `L(h) = ∫_{x'θ₀=0} h(x) x p(x) / (f(0|x)+1) dH`.
pub fn compute_l(spec: &SurfaceSpec, h: &dyn Fn(&[f64]) -> f64) -> Result<SurfaceEstimate> {
    let support = spec.single_index()?;
    let theta0 = &spec.dgp.theta0;
    let p = spec.dgp.block_density();
    hausdorff_integral_vec(
        &|x, out| {
            let w = h(x) * SurfaceWeight::Linear.factor(x, theta0) * p;
            for (o, xi) in out.iter_mut().zip(x) {
                *o = w * xi;
            }
        },
        spec.dgp.d,
        theta0,
        0.0,
        support,
        &spec.quadrature,
    )
}

/// `Σ_j ∫_{x_j'θ₀=0} m_j(x) x_j x_j' p(x) dH` over the `J` index hyperplanes
/// of the stacked covariate vector, with caller-supplied `m_j`.
pub fn misc_surface_sum(
    theta0: &Direction,
    weights: &[&dyn Fn(&[f64]) -> f64],
    support: BoxSupport,
    quad: &QuadratureSpec,
) -> Result<SurfaceMatrix> {
    let d = theta0.dim();
    let num = weights.len();
    if num == 0 {
        return config_err("need one weight per index");
    }
    let density = (support.high - support.low).powi(-((d * num) as i32));
    let mut total = DMatrix::zeros(d, d);
    let mut se_sq: Option<DMatrix<f64>> = None;
    let mut evaluations = 0;
    let mut method = IntegrationMethod::Quadrature;
    for (j, w) in weights.iter().enumerate() {
        let mut normal = vec![0.0; d * num];
        normal[j * d..(j + 1) * d].copy_from_slice(theta0);
        let normal = crate::direction::normalize(&normal)?;
        let q = QuadratureSpec {
            seed: crate::rng::derive_seed(quad.seed, &[j as u64]),
            ..*quad
        };
        let part = surface_moment_matrix(&|x| w(x) * density, &normal, 0.0, j, d, support, &q)?;
        total += &part.matrix;
        if let Some(se) = part.std_error {
            let sq = se.component_mul(&se);
            se_sq = Some(se_sq.map_or(sq.clone(), |acc| acc + sq));
        }
        evaluations += part.evaluations;
        method = part.method;
    }
    Ok(SurfaceMatrix {
        matrix: total,
        std_error: se_sq.map(|m| m.map(f64::sqrt)),
        evaluations,
        method,
    })
}

/// Settings for [`diagnose_surface`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnoseConfig {
    pub surface: SurfaceSpec,
    /// Kernel whose profile enters `Ω`.
    pub kernel: KernelFamily,
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        Self {
            surface: SurfaceSpec::default(),
            kernel: KernelFamily::GaussianProduct,
        }
    }
}

/// `V`, `Ω` and their spectra at `θ₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceDiagnostics {
    pub v: Vec<Vec<f64>>,
    pub v_eigenvalues: Vec<f64>,
    pub v_rank: usize,
    pub v_theta0_norm: f64,
    pub omega: Vec<Vec<f64>>,
    pub omega_eigenvalues: Vec<f64>,
    pub omega_theta0_norm: f64,
    pub profile_integral: f64,
    pub profile_integral_sq: f64,
    pub evaluations: usize,
    pub method: IntegrationMethod,
}

/// Relative eigenvalue threshold for the numerical rank of `V`.
pub const RANK_TOL: f64 = 1e-6;

pub fn diagnose_surface(config: &DiagnoseConfig) -> Result<SurfaceDiagnostics> {
    let theta0 = &config.surface.dgp.theta0;
    let v = compute_v(&config.surface)?;
    let profile = integrate_profile(config.kernel, theta0, 0, &config.surface.quadrature)?;
    let mut omega = surface_matrix(&config.surface, SurfaceWeight::OmegaKernel)?;
    omega.matrix *= profile.integral_sq;
    let norm = |m: &SurfaceMatrix| crate::direction::norm(&m.apply(theta0));
    Ok(SurfaceDiagnostics {
        v_eigenvalues: v.eigenvalues(),
        v_rank: v.numerical_rank(RANK_TOL),
        v_theta0_norm: norm(&v),
        v: v.rows(),
        omega_eigenvalues: omega.eigenvalues(),
        omega_theta0_norm: norm(&omega),
        omega: omega.rows(),
        profile_integral: profile.integral,
        profile_integral_sq: profile.integral_sq,
        evaluations: v.evaluations + omega.evaluations,
        method: v.method,
    })
}

fn kernel_support(family: KernelFamily) -> BoxSupport {
    let r = family.effective_radius();
    BoxSupport { low: -r, high: r }
}

/// `G(t) = ∫_{x'θ=t} K(x) dH` for the product kernel at unit bandwidth.
pub fn kernel_profile_g(
    family: KernelFamily,
    theta: &Direction,
    t: f64,
    quad: &QuadratureSpec,
) -> Result<f64> {
    family.validate()?;
    Ok(hausdorff_integral(&|x| family.eval(x), theta, t, kernel_support(family), quad)?.value[0])
}

/// Integrals of the kernel profile over `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileIntegrals {
    /// `∫G`.
    pub integral: f64,
    /// `∫G²`.
    pub integral_sq: f64,
    /// `∫t^j G` for `j = 1..=max_power`.
    pub moments: Vec<f64>,
}

/// Integrate `G` over `t`, with breakpoints where the slice passes a corner
/// of the kernel's support box.
pub fn integrate_profile(
    family: KernelFamily,
    theta: &Direction,
    max_power: u32,
    quad: &QuadratureSpec,
) -> Result<ProfileIntegrals> {
    family.validate()?;
    check_theta(theta)?;
    let support = kernel_support(family);
    let d = theta.dim();
    let mut breaks: Vec<f64> = (0..1usize << d)
        .map(|mask| {
            (0..d)
                .map(|i| theta[i] * if mask >> i & 1 == 1 { support.high } else { support.low })
                .sum()
        })
        .collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
    let rule = Rule::new(quad);
    let mut out = ProfileIntegrals {
        integral: 0.0,
        integral_sq: 0.0,
        moments: vec![0.0; max_power as usize],
    };
    let mut err = None;
    for piece in breaks.windows(2) {
        rule.each(piece[0], piece[1], |t, w| {
            match hausdorff_integral(&|x| family.eval(x), theta, t, support, quad) {
                Ok(g) => {
                    let g = g.value[0];
                    out.integral += w * g;
                    out.integral_sq += w * g * g;
                    let mut tp = 1.0;
                    for m in out.moments.iter_mut() {
                        tp *= t;
                        *m += w * tp * g;
                    }
                }
                Err(e) => err = Some(e),
            }
        });
    }
    match err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::direction::normalize;

    fn cube() -> BoxSupport {
        BoxSupport::new(-2.0, 2.0).unwrap()
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(5);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        // degree 9 is exact for 5 nodes
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((s - 2.0 / 9.0).abs() < 1e-14);
        let (x1, w1) = gauss_legendre(1);
        assert_eq!((x1[0], w1[0]), (0.0, 2.0));
    }

    #[test]
    fn frame_is_orthonormal() {
        let theta = normalize(&[0.3, -1.2, 0.7, 0.1]).unwrap();
        let f = orthonormal_complement(&theta);
        let tt = f.matrix().transpose() * f.matrix();
        assert!((tt - DMatrix::<f64>::identity(4, 4)).abs().max() < 1e-14);
        for i in 0..4 {
            assert!((f.matrix()[(i, 0)] - theta[i]).abs() < 1e-15);
        }
        assert_eq!(*orthonormal_complement(&Direction::axis(3, 0)).matrix(), DMatrix::identity(3, 3));
        let neg = orthonormal_complement(&theta.flipped());
        for i in 0..4 {
            assert_eq!(neg.matrix()[(i, 0)], -f.matrix()[(i, 0)]);
        }
    }

    #[test]
    fn slice_area_and_vanishing_integrand() {
        let q = QuadratureSpec::default();
        let e1 = Direction::axis(3, 0);
        let area = hausdorff_integral(&|_| 1.0, &e1, 0.0, cube(), &q).unwrap();
        assert!((area.value[0] - 16.0).abs() < 1e-10);
        let theta = normalize(&[1.0, -1.0, 1.0]).unwrap();
        let zero = hausdorff_integral(&|x| dot(x, &theta), &theta, 0.0, cube(), &q).unwrap();
        assert!(zero.value[0].abs() < 1e-12);
    }

    #[test]
    fn diagonal_slice_area_is_exact() {
        // {x1 + x2 = 0} ∩ [−2,2]³ is a 4√2 × 4 rectangle
        let theta = normalize(&[1.0, 1.0, 0.0]).unwrap();
        let q = QuadratureSpec {
            nodes: 4,
            ..Default::default()
        };
        let area = hausdorff_integral(&|_| 1.0, &theta, 0.0, cube(), &q).unwrap();
        assert!((area.value[0] - 16.0 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(BoxSupport::new(1.0, 1.0).is_err());
        let q = QuadratureSpec {
            nodes: 0,
            ..Default::default()
        };
        assert!(hausdorff_integral(&|_| 1.0, &Direction::axis(3, 0), 0.0, cube(), &q).is_err());
        let spec = SurfaceSpec {
            dgp: DgpSpec {
                design: Design::TwoIndex,
                ..Default::default()
            },
            ..Default::default()
        };
        assert!(compute_v(&spec).is_err());
    }
}
