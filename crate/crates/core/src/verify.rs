//! Certification of the identities the kernel satisfies.
//!
//! Every sweep is deterministic in `(spec, seed, config)`: sample `i` draws
//! from its own ChaCha8 stream `i` under the master seed, so sweeps can be
//! split across threads without changing a single bit of the result.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;
use core::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::cauchy::{self, SolveConfig};
use crate::covariance::{self, CovarianceBundle};
use crate::kernel::{self, KernelEval, ShortTimeConstants};
use crate::linalg;
use crate::math;
use crate::operator::{embed, OperatorSpec};
use crate::quadrature;
use crate::{Error, Result};

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CheckRecord {
    pub id: String,
    pub samples: usize,
    /// Largest residual seen; `NaN` fails.
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// Coordinates of the worst sample, check-specific layout.
    pub worst_at: Vec<f64>,
    pub detail: Option<String>,
}

impl CheckRecord {
    pub fn new(id: impl Into<String>, tolerance: f64) -> Self {
        Self {
            id: id.into(),
            samples: 0,
            worst: f64::NEG_INFINITY,
            tolerance,
            passed: true,
            worst_at: Vec::new(),
            detail: None,
        }
    }

    /// A check summarised by a single figure over `samples` samples.
    pub fn single(id: impl Into<String>, tolerance: f64, samples: usize, worst: f64, worst_at: Vec<f64>) -> Self {
        Self {
            id: id.into(),
            samples,
            worst,
            tolerance,
            passed: !worst.is_nan() && worst <= tolerance,
            worst_at,
            detail: None,
        }
    }

    /// Records one residual. A `NaN` sticks.
    pub fn observe(&mut self, residual: f64, at: impl FnOnce() -> Vec<f64>) {
        self.samples += 1;
        if self.worst.is_nan() {
            return;
        }
        if residual.is_nan() || residual > self.worst {
            self.worst = residual;
            self.worst_at = at();
        }
        self.passed = !self.worst.is_nan() && self.worst <= self.tolerance;
    }

    /// Folds another record for the same check into this one.
    pub fn absorb(&mut self, other: CheckRecord) {
        self.samples += other.samples;
        if other.worst.is_nan() || (!self.worst.is_nan() && other.worst > self.worst) {
            self.worst = other.worst;
            self.worst_at = other.worst_at;
        }
        self.passed = !self.worst.is_nan() && self.worst <= self.tolerance;
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }
}

/// All checks of one suite run.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VerificationReport {
    pub suite: String,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub checks: Vec<CheckRecord>,
    /// Checks that were not applicable, with the reason.
    pub skipped: Vec<String>,
}

impl VerificationReport {
    /// A report for `suite` under `cfg` with no checks yet.
    pub fn empty(suite: Suite, cfg: &SuiteConfig) -> Self {
        Self {
            suite: suite.name().to_string(),
            seed: cfg.seed,
            config: cfg.echo(),
            checks: Vec::new(),
            skipped: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Per-sample RNG: stream `stream` under the master `seed`.
pub fn sample_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    math::exp(uniform(rng, math::ln(lo), math::ln(hi)))
}

/// `center + 2 L z` with `L L' = C`: a point a few kernel widths away.
fn near(center: &DVector<f64>, factor_lower: &DMatrix<f64>, z: &DVector<f64>) -> DVector<f64> {
    center + factor_lower * z * 2.0
}

/// Draws `t` in `(lo, hi)` at least the exclusion window away from jumps.
fn off_breakpoint(spec: &OperatorSpec, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Result<f64> {
    for _ in 0..1000 {
        let t = uniform(rng, lo, hi);
        if covariance::check_off_breakpoint(spec, t, covariance::fd_step(t)).is_ok() {
            return Ok(t);
        }
    }
    Err(Error::InvalidArgument(format!(
        "no breakpoint-free time in ({lo}, {hi})"
    )))
}

fn check_min_span(t0: f64, t: f64) -> Result<()> {
    if t - t0 >= MIN_CHECK_SPAN {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "span {} is below the {MIN_CHECK_SPAN} floor of residual checks",
            t - t0
        )))
    }
}

/// Residual checks stay this far from the pole.
pub const MIN_CHECK_SPAN: f64 = 0.05;
/// Pass threshold of the normalized PDE residuals.
pub const PDE_TOL: f64 = 1e-4;

fn to_vec(v: &[f64], n: usize, what: &str) -> Result<DVector<f64>> {
    kernel::to_vector(v, n, what)
}

fn log_gamma_between(spec: &OperatorSpec, x: &DVector<f64>, t: f64, y: &DVector<f64>, s: f64) -> Result<f64> {
    Ok(kernel::log_gamma_in(&covariance::covariance(spec, s, t)?, x, y))
}

/// Fourth-order central difference of a log-kernel in time.
///
/// Nodes stay within `2h` of `at`, inside the breakpoint exclusion window.
/// The log is differenced because `Gamma` itself varies on the kernel
/// width, which is far below `h` resolution near short spans.
fn central_log_slope(f: impl Fn(f64) -> Result<f64>, at: f64, h: f64) -> Result<f64> {
    let (m2, m1, p1, p2) = (f(at - 2.0 * h)?, f(at - h)?, f(at + h)?, f(at + 2.0 * h)?);
    Ok((m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * h))
}

/// Normalized residual of `L Gamma(., .; x0, t0)` at `(x, t)`.
///
/// Spatial derivatives are analytic, `dGamma/dt` is `Gamma` times a central
/// difference of `log Gamma` inside one coefficient piece. The residual is divided by
/// `max(|a:D2 Gamma| + |Bx.D Gamma| + |dGamma/dt|, Gamma / (t - t0))`.
pub fn pde_residual_at(spec: &OperatorSpec, x: &[f64], t: f64, x0: &[f64], t0: f64) -> Result<f64> {
    let n = spec.dim();
    let xv = to_vec(x, n, "x")?;
    let x0v = to_vec(x0, n, "x0")?;
    check_min_span(t0, t)?;
    let h = covariance::fd_step(t);
    covariance::check_off_breakpoint(spec, t, h)?;
    let bundle = covariance::covariance(spec, t0, t)?;
    let d = kernel::derivatives_in(spec, &bundle, &xv, &x0v);
    let a = spec.track().coefficient_at(t);
    let q = spec.q();
    let diffusion = d.hess_x.view((0, 0), (q, q)).dot(a);
    let transport = (spec.drift() * &xv).dot(&d.grad_x);
    let dt = d.value * central_log_slope(|u| log_gamma_between(spec, &xv, u, &x0v, t0), t, h)?;
    let scale = (diffusion.abs() + transport.abs() + dt.abs())
        .max(d.value / (t - t0))
        .max(1e-300);
    Ok((diffusion + transport - dt).abs() / scale)
}

/// Normalized residual of `L* Gamma(x, t; ., .)` at `(y, s)`:
/// `a(s):D2_y Gamma - By.D_y Gamma - Gamma Tr B + dGamma/ds`.
pub fn adjoint_residual_at(spec: &OperatorSpec, x: &[f64], t: f64, y: &[f64], s: f64) -> Result<f64> {
    let n = spec.dim();
    let xv = to_vec(x, n, "x")?;
    let yv = to_vec(y, n, "y")?;
    check_min_span(s, t)?;
    let h = covariance::fd_step(s);
    covariance::check_off_breakpoint(spec, s, h)?;
    let bundle = covariance::covariance(spec, s, t)?;
    let d = kernel::derivatives_in(spec, &bundle, &xv, &yv);
    let a = spec.track().coefficient_at(s);
    let q = spec.q();
    let diffusion = d.hess_y.view((0, 0), (q, q)).dot(a);
    let transport = (spec.drift() * &yv).dot(&d.grad_y);
    let decay = d.value * spec.trace_drift();
    let ds = d.value * central_log_slope(|u| log_gamma_between(spec, &xv, t, &yv, u), s, h)?;
    let scale = (diffusion.abs() + transport.abs() + decay.abs() + ds.abs())
        .max(d.value / (t - s))
        .max(1e-300);
    Ok((diffusion - transport - decay + ds).abs() / scale)
}

/// `pde_residual_at` over given points for one pole.
pub fn pde_residual(spec: &OperatorSpec, pole: (&[f64], f64), points: &[(Vec<f64>, f64)]) -> Result<CheckRecord> {
    let mut rec = CheckRecord::new("pde", PDE_TOL);
    for (x, t) in points {
        let r = pde_residual_at(spec, x, *t, pole.0, pole.1)?;
        rec.observe(r, || with_time(x, *t));
    }
    Ok(rec)
}

/// `adjoint_residual_at` over given pole points for one `(x, t)`.
pub fn adjoint_residual(spec: &OperatorSpec, point: (&[f64], f64), poles: &[(Vec<f64>, f64)]) -> Result<CheckRecord> {
    let mut rec = CheckRecord::new("adjoint", PDE_TOL);
    for (y, s) in poles {
        let r = adjoint_residual_at(spec, point.0, point.1, y, *s)?;
        rec.observe(r, || with_time(y, *s));
    }
    Ok(rec)
}

fn with_time(x: &[f64], t: f64) -> Vec<f64> {
    let mut v = x.to_vec();
    v.push(t);
    v
}

/// Random pole and point: pole `x0 ~ N(0, I)`, `t0 ~ U(-1, 1)`, span
/// log-uniform in `spans`, and `x` within a few kernel widths of the moving
/// center.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSample {
    pub x: Vec<f64>,
    pub t: f64,
    pub x0: Vec<f64>,
    pub t0: f64,
}

impl KernelSample {
    fn flat(&self) -> Vec<f64> {
        let mut v = self.x.clone();
        v.push(self.t);
        v.extend_from_slice(&self.x0);
        v.push(self.t0);
        v
    }
}

/// Draws sample `index` of a sweep. With `off_breakpoints` the forward time
/// (`t`) or the pole time (`t0`, when `pole_side`) avoids coefficient jumps.
pub fn draw_sample(
    spec: &OperatorSpec,
    seed: u64,
    index: u64,
    spans: (f64, f64),
    off_breakpoints: Option<bool>,
) -> Result<KernelSample> {
    let n = spec.dim();
    let mut rng = sample_rng(seed, index);
    let x0 = normal_vec(&mut rng, n);
    let span = log_uniform(&mut rng, spans.0, spans.1);
    let (t0, t) = match off_breakpoints {
        None => {
            let t0 = uniform(&mut rng, -1.0, 1.0);
            (t0, t0 + span)
        }
        Some(false) => {
            let t = off_breakpoint(spec, &mut rng, -1.0 + span, 1.0 + span)?;
            (t - span, t)
        }
        Some(true) => {
            let t0 = off_breakpoint(spec, &mut rng, -1.0, 1.0)?;
            (t0, t0 + span)
        }
    };
    let bundle = covariance::covariance(spec, t0, t)?;
    let z = normal_vec(&mut rng, n);
    let x = near(&(bundle.propagator() * &x0), bundle.factor().lower(), &z);
    Ok(KernelSample {
        x: x.as_slice().to_vec(),
        t,
        x0: x0.as_slice().to_vec(),
        t0,
    })
}

/// Span range of the residual sweeps.
pub const RESIDUAL_SPANS: (f64, f64) = (MIN_CHECK_SPAN, 3.0);

/// Random-sample sweep of [`pde_residual_at`], samples `range`.
pub fn pde_sweep(spec: &OperatorSpec, seed: u64, range: Range<u64>) -> Result<CheckRecord> {
    let mut rec = CheckRecord::new("pde", PDE_TOL);
    for i in range {
        let s = draw_sample(spec, seed, i, RESIDUAL_SPANS, Some(false))?;
        let r = pde_residual_at(spec, &s.x, s.t, &s.x0, s.t0)?;
        rec.observe(r, || s.flat());
    }
    Ok(rec)
}

/// Random-sample sweep of [`adjoint_residual_at`]: the pole time avoids
/// jumps and the pole point is drawn around the backward center.
pub fn adjoint_sweep(spec: &OperatorSpec, seed: u64, range: Range<u64>) -> Result<CheckRecord> {
    let mut rec = CheckRecord::new("adjoint", PDE_TOL);
    let n = spec.dim();
    for i in range {
        let s = draw_sample(spec, seed, i, RESIDUAL_SPANS, Some(true))?;
        // pole near E^-1 x, so the residual is taken where Gamma lives
        let bundle = covariance::covariance(spec, s.t0, s.t)?;
        let mut rng = sample_rng(seed ^ ADJOINT_STREAM_SALT, i);
        let z = normal_vec(&mut rng, n);
        let x = to_vec(&s.x, n, "x")?;
        let e_inv = covariance::propagator(spec, -(s.t - s.t0))?;
        let y = &e_inv * near(&x, bundle.factor().lower(), &z);
        let r = adjoint_residual_at(spec, &s.x, s.t, y.as_slice(), s.t0)?;
        rec.observe(r, || {
            let mut v = s.x.clone();
            v.push(s.t);
            v.extend_from_slice(y.as_slice());
            v.push(s.t0);
            v
        });
    }
    Ok(rec)
}

const ADJOINT_STREAM_SALT: u64 = 0x0AD1_0117;

/// Span range of the derivative oracle; the finite differences need the
/// kernel to be wider than their step.
pub const DERIVATIVE_SPANS: (f64, f64) = (0.25, 3.0);
pub const DERIVATIVE_TOL: f64 = 1e-5;

/// Fourth-order central difference `(-f(2h) + 8f(h) - 8f(-h) + f(-2h)) / 12h`.
fn central5<T>(f: impl Fn(f64) -> T, h: f64) -> T
where
    T: core::ops::Sub<Output = T> + core::ops::Add<Output = T> + core::ops::Mul<f64, Output = T>,
{
    (f(-2.0 * h) - f(2.0 * h) + (f(h) - f(-h)) * 8.0) * (1.0 / (12.0 * h))
}

fn rel_dev_vec(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / a.amax().max(1e-300)
}

fn rel_dev_mat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / a.amax().max(1e-300)
}

/// Worst relative deviation between the closed-form derivatives and central
/// differences (step `1e-5 (1 + |x_i|)`), over the four derivative objects.
/// Gradients are differenced from `Gamma`, Hessians from the closed-form
/// gradients.
pub fn derivative_deviation(spec: &OperatorSpec, bundle: &CovarianceBundle, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let n = x.len();
    let d = kernel::derivatives_in(spec, bundle, x, y);
    let gamma = |x: &DVector<f64>, y: &DVector<f64>| math::exp(kernel::log_gamma_in(bundle, x, y));
    let mut grad_x = DVector::zeros(n);
    let mut grad_y = DVector::zeros(n);
    let mut hess_x = DMatrix::zeros(n, n);
    let mut hess_y = DMatrix::zeros(n, n);
    for i in 0..n {
        let hx = 1e-5 * (1.0 + x[i].abs());
        let shift_x = |e: f64| {
            let mut xs = x.clone();
            xs[i] += e;
            xs
        };
        grad_x[i] = central5(|e| gamma(&shift_x(e), y), hx);
        let col = central5(|e| kernel::derivatives_in(spec, bundle, &shift_x(e), y).grad_x, hx);
        hess_x.set_column(i, &col);

        let hy = 1e-5 * (1.0 + y[i].abs());
        let shift_y = |e: f64| {
            let mut ys = y.clone();
            ys[i] += e;
            ys
        };
        grad_y[i] = central5(|e| gamma(x, &shift_y(e)), hy);
        let col = central5(|e| kernel::derivatives_in(spec, bundle, x, &shift_y(e)).grad_y, hy);
        hess_y.set_column(i, &col);
    }
    rel_dev_vec(&d.grad_x, &grad_x)
        .max(rel_dev_vec(&d.grad_y, &grad_y))
        .max(rel_dev_mat(&d.hess_x, &hess_x))
        .max(rel_dev_mat(&d.hess_y, &hess_y))
}

/// Random-sample sweep of [`derivative_deviation`].
pub fn derivative_sweep(spec: &OperatorSpec, seed: u64, range: Range<u64>) -> Result<CheckRecord> {
    let mut rec = CheckRecord::new("derivatives", DERIVATIVE_TOL);
    let n = spec.dim();
    for i in range {
        let s = draw_sample(spec, seed, i, DERIVATIVE_SPANS, None)?;
        let bundle = covariance::covariance(spec, s.t0, s.t)?;
        let x = to_vec(&s.x, n, "x")?;
        let y = to_vec(&s.x0, n, "y")?;
        rec.observe(derivative_deviation(spec, &bundle, &x, &y), || s.flat());
    }
    Ok(rec)
}

/// Slack of the comparison sandwich, relative (1e-12 in the log domain).
pub const COMPARISON_TOL: f64 = 1e-12;
/// Span range of comparison samples.
pub const COMPARISON_SPANS: (f64, f64) = (0.01, 3.0);

/// `max(ln lower - ln Gamma, ln Gamma - ln upper)` over random samples;
/// positive values are violations. `nu` overrides the operator's constant,
/// which is how falsification runs are made.
pub fn comparison_sweep(spec: &OperatorSpec, nu: Option<f64>, seed: u64, range: Range<u64>) -> Result<CheckRecord> {
    let nu = nu.unwrap_or_else(|| spec.nu());
    let mut rec = CheckRecord::new("comparison", COMPARISON_TOL).with_detail(format!("nu = {nu}"));
    let n = spec.dim();
    for i in range {
        let s = draw_sample(spec, seed, i, COMPARISON_SPANS, None)?;
        let x = to_vec(&s.x, n, "x")?;
        let x0 = to_vec(&s.x0, n, "x0")?;
        let bundle = covariance::covariance(spec, s.t0, s.t)?;
        let model = covariance::model_covariance(spec, s.t - s.t0)?;
        let g = kernel::log_gamma_in(&bundle, &x, &x0);
        let b = kernel::comparison_in(&model, nu, &x, &x0);
        let violation = (b.lower.log_value - g).max(g - b.upper.log_value);
        rec.observe(violation, || s.flat());
    }
    Ok(rec)
}

/// For `nu = 1` operators both bounds must coincide with `Gamma`:
/// `max |ln bound - ln Gamma|`.
pub fn comparison_equality_sweep(spec: &OperatorSpec, seed: u64, range: Range<u64>) -> Result<CheckRecord> {
    let mut rec = CheckRecord::new("comparison-equality", COMPARISON_TOL);
    let n = spec.dim();
    for i in range {
        let s = draw_sample(spec, seed, i, COMPARISON_SPANS, None)?;
        let x = to_vec(&s.x, n, "x")?;
        let x0 = to_vec(&s.x0, n, "x0")?;
        let bundle = covariance::covariance(spec, s.t0, s.t)?;
        let model = covariance::model_covariance(spec, s.t - s.t0)?;
        let g = kernel::log_gamma_in(&bundle, &x, &x0);
        let b = kernel::comparison_in(&model, 1.0, &x, &x0);
        let gap = (b.lower.log_value - g).abs().max((b.upper.log_value - g).abs());
        rec.observe(gap, || s.flat());
    }
    Ok(rec)
}

/// Spans of the mass checks.
pub const MASS_SPANS: [f64; 3] = [0.1, 1.0, 5.0];
pub const MASS_TOL: f64 = 1e-6;
const MASS_ORDER: usize = 12;

/// Relative errors of `int Gamma dx = e^{-(t-t0) Tr B}` and
/// `int Gamma dy = 1` for one pole/point and span.
///
/// Both integrals are taken by Gauss-Hermite after the substitution
/// `x = E x0 + 2 S z` (resp. `y = E^-1 (x - 2 S z)`) with `S` the symmetric
/// root of `C`; the Jacobians use `det S` and `det E^-1` computed directly,
/// independently of the log-determinant and trace the kernel uses.
pub fn mass_errors(spec: &OperatorSpec, x0: &[f64], t0: f64, span: f64) -> Result<(f64, f64)> {
    let n = spec.dim();
    if n > quadrature::MAX_TENSOR_DIM {
        return Err(Error::UnsupportedDimension(n));
    }
    let x0v = to_vec(x0, n, "x0")?;
    let bundle = covariance::covariance(spec, t0, t0 + span)?;
    let root = linalg::spd_sqrt(bundle.matrix())?;
    let det_root = root.determinant();
    let e_inv = covariance::propagator(spec, -span)?;
    let det_e_inv = e_inv.determinant();
    let rule = quadrature::gauss_hermite(MASS_ORDER);
    let center = bundle.propagator() * &x0v;
    let two_n = math::powf(2.0, n as f64);

    let mut in_x = 0.0;
    let mut in_y = 0.0;
    quadrature::for_each_tensor_node(&rule, n, |z, w| {
        let zv = DVector::from_column_slice(z);
        let ez2 = math::exp(zv.norm_squared());
        let x = &center + &root * &zv * 2.0;
        in_x += w * ez2 * math::exp(kernel::log_gamma_in(&bundle, &x, &x0v));
        let y = &e_inv * (&center - &root * &zv * 2.0);
        in_y += w * ez2 * math::exp(kernel::log_gamma_in(&bundle, &center, &y));
    })?;
    in_x *= two_n * det_root;
    in_y *= two_n * det_root * det_e_inv.abs();
    let expected_x = math::exp(-span * spec.trace_drift());
    Ok(((in_x - expected_x).abs() / expected_x, (in_y - 1.0).abs()))
}

/// [`mass_errors`] at the [`MASS_SPANS`] for a random pole.
pub fn mass_check(spec: &OperatorSpec, seed: u64) -> Result<CheckRecord> {
    let mut rec = CheckRecord::new("mass", MASS_TOL);
    let mut rng = sample_rng(seed, 0);
    let x0 = normal_vec(&mut rng, spec.dim());
    let t0 = uniform(&mut rng, -1.0, 1.0);
    for &span in &MASS_SPANS {
        let (ex, ey) = mass_errors(spec, x0.as_slice(), t0, span)?;
        rec.observe(ex.max(ey), || vec![span, ex, ey]);
    }
    Ok(rec)
}

/// Gauss-Hermite checks of `int e^{-|x|^2} x'Ax dx = pi^{N/2} Tr A / 2` and
/// `int e^{-|x|^2} x0'Ax dx = 0` for a random `A` and `x0`.
pub fn gauss_moment_selftest(dim: usize, seed: u64) -> Result<CheckRecord> {
    if dim == 0 || dim > quadrature::MAX_TENSOR_DIM {
        return Err(Error::UnsupportedDimension(dim));
    }
    let mut rng = sample_rng(seed, 0);
    let a = DMatrix::from_fn(dim, dim, |_, _| StandardNormal.sample(&mut rng));
    let x0 = normal_vec(&mut rng, dim);
    let (quad, lin) = gauss_moments(&a, &x0)?;
    let exact = math::powf(math::PI, 0.5 * dim as f64) * 0.5 * a.trace();
    let mut rec = CheckRecord::new("gauss-moments", 1e-10);
    rec.observe((quad - exact).abs() / exact.abs().max(1.0), || vec![quad, exact]);
    rec.observe(lin.abs(), || vec![lin, 0.0]);
    Ok(rec)
}

/// The two Gaussian moments `(int e^{-|x|^2} x'Ax, int e^{-|x|^2} x0'Ax)`.
pub fn gauss_moments(a: &DMatrix<f64>, x0: &DVector<f64>) -> Result<(f64, f64)> {
    let dim = a.nrows();
    let rule = quadrature::gauss_hermite(10);
    let mut quad = 0.0;
    let mut lin = 0.0;
    quadrature::for_each_tensor_node(&rule, dim, |z, w| {
        let zv = DVector::from_column_slice(z);
        let az = a * &zv;
        quad += w * zv.dot(&az);
        lin += w * x0.dot(&az);
    })?;
    Ok((quad, lin))
}

/// Least-squares slope of `ln det C0(t)` against `ln t`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SlopeFit {
    pub q_fit: f64,
    pub q_expected: u32,
    pub log_t: Vec<f64>,
    pub log_det: Vec<f64>,
}

impl SlopeFit {
    pub fn rel_error(&self) -> f64 {
        (self.q_fit - self.q_expected as f64).abs() / self.q_expected as f64
    }

    pub fn record(&self) -> CheckRecord {
        CheckRecord::single(
            "short-time-slope",
            0.01,
            self.log_t.len(),
            self.rel_error(),
            vec![self.q_fit, self.q_expected as f64],
        )
        .with_detail(format!("Q_fit = {:.6}, Q = {}", self.q_fit, self.q_expected))
    }
}

/// Slope over `t = 2^-k`, `k = 6..=16`.
pub fn short_time_slope(spec: &OperatorSpec) -> Result<SlopeFit> {
    let mut log_t = Vec::new();
    let mut log_det = Vec::new();
    for k in 6..=16 {
        let t = math::powf(2.0, -(k as f64));
        log_t.push(math::ln(t));
        log_det.push(covariance::model_covariance(spec, t)?.log_det());
    }
    let m = log_t.len() as f64;
    let mx = log_t.iter().sum::<f64>() / m;
    let my = log_det.iter().sum::<f64>() / m;
    let sxy: f64 = log_t.iter().zip(&log_det).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = log_t.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(SlopeFit {
        q_fit: sxy / sxx,
        q_expected: spec.structure().homogeneous_dim(),
        log_t,
        log_det,
    })
}

/// Fitted short-time envelope with its holdout verdict.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ShortTimeFit {
    pub constants: ShortTimeConstants,
    pub train_samples: usize,
    pub holdout_samples: usize,
    pub holdout_violations: usize,
    /// Largest `ln Gamma - ln bound` on the holdout set.
    pub holdout_worst: f64,
}

impl ShortTimeFit {
    pub fn record(&self) -> CheckRecord {
        CheckRecord::single(
            "short-time-envelope",
            COMPARISON_TOL,
            self.holdout_samples,
            self.holdout_worst,
            vec![self.constants.c, self.constants.delta],
        )
        .with_detail(format!(
            "c = {}, delta = {}, holdout violations = {}",
            self.constants.c, self.constants.delta, self.holdout_violations
        ))
    }
}

/// Candidate `delta`s, largest first.
pub const DELTA_GRID: [f64; 6] = [0.9, 0.5, 0.25, 0.1, 0.05, 0.01];
/// Smallest span the envelope is fitted on.
pub const ENVELOPE_MIN_SPAN: f64 = 1e-3;
const SALT_HOLDOUT: u64 = 0x9E37_79B9_7F4A_7C15;

/// `c`-grid value `0.99 * 0.9^k`.
fn c_grid(k: u32) -> f64 {
    0.99 * math::powf(0.9, k as f64)
}

struct EnvelopeSample {
    span: f64,
    offset_sq: f64,
    log_gamma: f64,
}

fn envelope_samples(spec: &OperatorSpec, seed: u64, count: usize, max_span: f64) -> Result<Vec<EnvelopeSample>> {
    let n = spec.dim();
    let mut out = Vec::with_capacity(count);
    for i in 0..count as u64 {
        let mut rng = sample_rng(seed, i);
        let x0 = normal_vec(&mut rng, n);
        let t0 = uniform(&mut rng, -1.0, 1.0);
        let span = log_uniform(&mut rng, ENVELOPE_MIN_SPAN, max_span);
        let bundle = covariance::covariance(spec, t0, t0 + span)?;
        // spread up to 3 kernel widths so the Gaussian tail is exercised
        let z = normal_vec(&mut rng, n) * uniform(&mut rng, 0.0, 3.0);
        let center = bundle.propagator() * &x0;
        let x = near(&center, bundle.factor().lower(), &z);
        out.push(EnvelopeSample {
            span,
            offset_sq: (&x - &center).norm_squared(),
            log_gamma: kernel::log_gamma_in(&bundle, &x, &x0),
        });
    }
    Ok(out)
}

/// `ln Gamma - ln bound`; positive means the envelope fails.
fn envelope_excess(c: f64, q_dim: u32, s: &EnvelopeSample) -> f64 {
    let consts = ShortTimeConstants { c, delta: 1.0 };
    s.log_gamma - kernel::short_time_log_bound(consts, q_dim, s.offset_sq, s.span)
}

/// Largest `c` (not above 1) with the envelope holding on every sample.
/// The bound decreases in `c`, so each sample admits an interval `(0, c_i]`.
fn max_admissible_c(q_dim: u32, samples: &[&EnvelopeSample]) -> f64 {
    let mut c_max = 1.0f64;
    for s in samples {
        if envelope_excess(c_max, q_dim, s) <= 0.0 {
            continue;
        }
        let (mut lo, mut hi) = (0.0f64, c_max);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if mid == 0.0 || envelope_excess(mid, q_dim, s) <= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        c_max = lo;
    }
    c_max
}

/// Fits `(c, delta)` of the short-time envelope on `samples` training draws
/// and verifies on as many fresh draws under a different seed.
///
/// `c` is the largest value of the grid `0.99 * 0.9^k` admissible on the
/// training set; `delta` is the largest of [`DELTA_GRID`] whose `c` is at
/// least half the best `c` over the grid.
pub fn fit_short_time_constants(spec: &OperatorSpec, seed: u64, samples: usize) -> Result<ShortTimeFit> {
    let q_dim = spec.structure().homogeneous_dim();
    let train = envelope_samples(spec, seed, samples, DELTA_GRID[0])?;
    let mut per_delta = Vec::with_capacity(DELTA_GRID.len());
    for &delta in &DELTA_GRID {
        let subset: Vec<&EnvelopeSample> = train.iter().filter(|s| s.span <= delta).collect();
        let c_star = max_admissible_c(q_dim, &subset);
        let c = (0..200).map(c_grid).find(|&c| c <= c_star).filter(|&c| c >= 1e-6);
        per_delta.push((delta, c));
    }
    let best = per_delta.iter().filter_map(|(_, c)| *c).fold(0.0f64, f64::max);
    let (delta, c) = per_delta
        .iter()
        .find_map(|&(d, c)| c.filter(|&c| c >= 0.5 * best).map(|c| (d, c)))
        .ok_or_else(|| Error::FitFailed(String::from("no admissible c on the training set")))?;

    let holdout = envelope_samples(spec, seed ^ SALT_HOLDOUT, samples, delta)?;
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for s in &holdout {
        let e = envelope_excess(c, q_dim, s);
        worst = worst.max(e);
        if e > COMPARISON_TOL {
            violations += 1;
        }
    }
    Ok(ShortTimeFit {
        constants: ShortTimeConstants { c, delta },
        train_samples: train.len(),
        holdout_samples: holdout.len(),
        holdout_violations: violations,
        holdout_worst: worst,
    })
}

/// `Gamma(x, t; 0, 0)` along `schedule`. Diagnostic only.
pub fn long_time_probe(spec: &OperatorSpec, x: &[f64], schedule: &[f64]) -> Result<Vec<(f64, KernelEval)>> {
    let origin = vec![0.0; spec.dim()];
    schedule
        .iter()
        .map(|&t| Ok((t, kernel::gamma(spec, x, t, &origin, 0.0)?)))
        .collect()
}

/// Residual bound of the determinant identities.
pub const TRACE_TOL: f64 = 1e-5;

/// Both determinant identities at `count` breakpoint-free times: forward with
/// `t0 = 0`, `t` in `[0.1, 5]`; backward with `t = 5.5`, `s` in `[0.1, 5]`.
pub fn trace_sweep(spec: &OperatorSpec, count: usize) -> Result<CheckRecord> {
    let mut rec = CheckRecord::new("traces", TRACE_TOL);
    for t in covariance::off_breakpoint_times(spec, 0.1, 5.0, count) {
        let r = covariance::trace_identity_residual(spec, 0.0, t)?;
        rec.observe(r, || vec![0.0, t]);
        let r = covariance::adjoint_trace_identity_residual(spec, t, 5.5)?;
        rec.observe(r, || vec![t, 5.5]);
    }
    Ok(rec)
}

/// Tolerance of the reproduction check.
pub const REPRODUCTION_TOL: f64 = 1e-6;

/// [`cauchy::reproduction_residual`] at random `(x, t; y, s)` with `tau` at
/// the midpoint.
pub fn reproduction_sweep(spec: &OperatorSpec, seed: u64, range: Range<u64>, cfg: &SolveConfig) -> Result<CheckRecord> {
    let mut rec = CheckRecord::new("reproduction", REPRODUCTION_TOL);
    for i in range {
        let s = draw_sample(spec, seed, i, (0.1, 3.0), None)?;
        let tau = 0.5 * (s.t + s.t0);
        let r = cauchy::reproduction_residual(spec, &s.x, s.t, &s.x0, s.t0, tau, cfg)?;
        rec.observe(r, || s.flat());
    }
    Ok(rec)
}

/// Euler-Maruyama settings for `dX = -B X dt + sigma(t) dW`.
#[derive(Debug, Clone, PartialEq)]
pub struct SdeConfig {
    pub paths: u64,
    pub dt: f64,
    /// One `N x q` matrix per coefficient piece, zero below row `q`.
    pub sigma_track: Vec<DMatrix<f64>>,
}

/// Tolerance of `sigma sigma' / 2 = A0`.
pub const SIGMA_TOL: f64 = 1e-12;

impl SdeConfig {
    /// `sigma = sqrt(2) chol(A0)` per piece, embedded in the first `q` rows.
    pub fn from_spec(spec: &OperatorSpec, paths: u64, dt: f64) -> Result<Self> {
        let n = spec.dim();
        let q = spec.q();
        let mut sigma_track = Vec::new();
        for a0 in spec.track().pieces() {
            let l = linalg::spd_factor(a0)?.lower().clone() * math::sqrt(2.0);
            let mut s = DMatrix::zeros(n, q);
            s.view_mut((0, 0), (q, q)).copy_from(&l);
            sigma_track.push(s);
        }
        Ok(Self { paths, dt, sigma_track })
    }

    /// Checks shape and `sigma sigma' / 2 = A0` piece by piece.
    pub fn check(&self, spec: &OperatorSpec) -> Result<()> {
        let (n, q) = (spec.dim(), spec.q());
        let pieces = spec.track().pieces();
        if self.sigma_track.len() != pieces.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} sigma pieces for {} coefficient pieces",
                self.sigma_track.len(),
                pieces.len()
            )));
        }
        if !(self.dt > 0.0) || self.paths < 2 {
            return Err(Error::InvalidArgument(String::from("need dt > 0 and at least 2 paths")));
        }
        for (piece, (s, a0)) in self.sigma_track.iter().zip(pieces).enumerate() {
            if s.shape() != (n, q) {
                return Err(Error::DimensionMismatch(format!(
                    "sigma piece {piece} is {:?}, expected ({n}, {q})",
                    s.shape()
                )));
            }
            let full = s * s.transpose() * 0.5;
            let deviation = (&full - embed(a0, n)).amax() / a0.amax().max(f64::MIN_POSITIVE);
            if !(deviation <= SIGMA_TOL) {
                return Err(Error::InconsistentSigma { piece, deviation });
            }
        }
        Ok(())
    }
}

/// Path moments around a reference point: `sum d` and `sum d d'` with
/// `d = X - reference`.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub count: u64,
    pub sum: DVector<f64>,
    pub sum_sq: DMatrix<f64>,
}

impl Moments {
    pub fn zeros(n: usize) -> Self {
        Self {
            count: 0,
            sum: DVector::zeros(n),
            sum_sq: DMatrix::zeros(n, n),
        }
    }

    /// Appends `other`; merge blocks in a fixed order for reproducibility.
    pub fn merge(&mut self, other: &Moments) {
        self.count += other.count;
        self.sum += &other.sum;
        self.sum_sq += &other.sum_sq;
    }
}

/// Paths are simulated and summed in blocks of this many.
pub const MC_BLOCK: u64 = 4096;

/// Simulates paths `range` (each on its own stream) and returns their
/// moments around `E(t - t0) x0`.
pub fn mc_moments(
    spec: &OperatorSpec,
    x0: &[f64],
    t0: f64,
    t: f64,
    sde: &SdeConfig,
    seed: u64,
    range: Range<u64>,
) -> Result<Moments> {
    let n = spec.dim();
    let q = spec.q();
    let x0v = to_vec(x0, n, "x0")?;
    if !(t > t0) {
        return Err(Error::NotAfterInitialTime { t0, t });
    }
    sde.check(spec)?;
    let reference = covariance::propagator(spec, t - t0)? * &x0v;
    let steps = libm::ceil((t - t0) / sde.dt - 1e-9).max(1.0) as usize;
    let h = (t - t0) / steps as f64;
    let sqrt_h = math::sqrt(h);
    let piece_of_step: Vec<usize> = (0..steps)
        .map(|k| spec.track().piece_index(t0 + k as f64 * h))
        .collect();
    // row-major copies for the inner loop
    let b: Vec<f64> = (0..n * n).map(|k| spec.drift()[(k / n, k % n)]).collect();
    let sigmas: Vec<Vec<f64>> = sde
        .sigma_track
        .iter()
        .map(|s| (0..n * q).map(|k| s[(k / q, k % q)] * sqrt_h).collect())
        .collect();

    let mut m = Moments::zeros(n);
    let mut x = vec![0.0; n];
    let mut drift = vec![0.0; n];
    let mut xi = vec![0.0; q];
    for path in range {
        let mut rng = sample_rng(seed, path);
        x.copy_from_slice(x0v.as_slice());
        for &piece in &piece_of_step {
            for (i, d) in drift.iter_mut().enumerate() {
                let row = &b[i * n..(i + 1) * n];
                *d = row.iter().zip(&x).map(|(bij, xj)| bij * xj).sum::<f64>();
            }
            for v in xi.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
            let s = &sigmas[piece];
            for i in 0..n {
                let noise: f64 = s[i * q..(i + 1) * q].iter().zip(&xi).map(|(a, b)| a * b).sum();
                x[i] += -drift[i] * h + noise;
            }
        }
        m.count += 1;
        for i in 0..n {
            let di = x[i] - reference[i];
            m.sum[i] += di;
            for j in 0..=i {
                m.sum_sq[(i, j)] += di * (x[j] - reference[j]);
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            m.sum_sq[(j, i)] = m.sum_sq[(i, j)];
        }
    }
    Ok(m)
}

/// Empirical against exact moments.
#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub paths: u64,
    pub mean: DVector<f64>,
    pub expected_mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    /// `2 C(t, t0)`.
    pub expected_covariance: DMatrix<f64>,
    /// Largest deviation in standard errors.
    pub worst_z: f64,
}

/// Pass threshold in standard errors.
pub const MC_Z_TOL: f64 = 5.0;

impl McReport {
    pub fn passed(&self) -> bool {
        self.worst_z <= MC_Z_TOL
    }

    pub fn record(&self) -> CheckRecord {
        CheckRecord::single("monte-carlo", MC_Z_TOL, self.paths as usize, self.worst_z, Vec::new())
            .with_detail(format!("{} paths, worst deviation {:.3} SE", self.paths, self.worst_z))
    }
}

/// Compares accumulated moments with `E(t - t0) x0` and `2 C(t, t0)`.
///
/// Standard errors: `sqrt(S_ii / n)` for means and
/// `sqrt((S_ii S_jj + S_ij^2) / n)` for covariances (Gaussian fourth moments).
pub fn mc_summarize(spec: &OperatorSpec, x0: &[f64], t0: f64, t: f64, m: &Moments) -> Result<McReport> {
    let n = spec.dim();
    let x0v = to_vec(x0, n, "x0")?;
    let expected_mean = covariance::propagator(spec, t - t0)? * &x0v;
    let expected_covariance = covariance::covariance_matrix(spec, t0, t)? * 2.0;
    let count = m.count as f64;
    let dbar = &m.sum / count;
    let cov = (&m.sum_sq - &dbar * dbar.transpose() * count) / (count - 1.0);
    let mean = &expected_mean + &dbar;
    let mut worst_z = 0.0f64;
    for i in 0..n {
        let se = math::sqrt(cov[(i, i)] / count);
        worst_z = worst_z.max((mean[i] - expected_mean[i]).abs() / se);
        for j in 0..=i {
            let se = math::sqrt((cov[(i, i)] * cov[(j, j)] + cov[(i, j)] * cov[(i, j)]) / count);
            worst_z = worst_z.max((cov[(i, j)] - expected_covariance[(i, j)]).abs() / se);
        }
    }
    if worst_z.is_nan() {
        worst_z = f64::INFINITY;
    }
    Ok(McReport {
        paths: m.count,
        mean,
        expected_mean,
        covariance: cov,
        expected_covariance,
        worst_z,
    })
}

/// Euler-Maruyama cross-check of the mean `E(t - t0) x0` and covariance
/// `2 C(t, t0)`.
pub fn mc_crosscheck(spec: &OperatorSpec, x0: &[f64], t0: f64, t: f64, sde: &SdeConfig, seed: u64) -> Result<McReport> {
    let mut total = Moments::zeros(spec.dim());
    let mut start = 0;
    while start < sde.paths {
        let end = (start + MC_BLOCK).min(sde.paths);
        total.merge(&mc_moments(spec, x0, t0, t, sde, seed, start..end)?);
        start = end;
    }
    mc_summarize(spec, x0, t0, t, &total)
}

/// Starting point and interval of the Monte-Carlo check in suites.
pub fn mc_setup(spec: &OperatorSpec) -> (Vec<f64>, f64, f64) {
    let x0 = [0.5, -0.3, 0.2];
    let x0 = (0..spec.dim()).map(|i| x0[i % 3]).collect();
    (x0, 0.0, 1.0)
}

/// Named groups of checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Suite {
    All,
    Pde,
    Adjoint,
    Mass,
    Comparison,
    Reproduction,
    Asymptotics,
    Mc,
    Traces,
    Derivatives,
}

impl Suite {
    pub const NAMES: [&'static str; 10] = [
        "all",
        "pde",
        "adjoint",
        "mass",
        "comparison",
        "reproduction",
        "asymptotics",
        "mc",
        "traces",
        "derivatives",
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::All => "all",
            Suite::Pde => "pde",
            Suite::Adjoint => "adjoint",
            Suite::Mass => "mass",
            Suite::Comparison => "comparison",
            Suite::Reproduction => "reproduction",
            Suite::Asymptotics => "asymptotics",
            Suite::Mc => "mc",
            Suite::Traces => "traces",
            Suite::Derivatives => "derivatives",
        }
    }

    /// The concrete suites `self` stands for.
    pub fn expand(self) -> Vec<Suite> {
        match self {
            Suite::All => vec![
                Suite::Pde,
                Suite::Adjoint,
                Suite::Derivatives,
                Suite::Mass,
                Suite::Comparison,
                Suite::Reproduction,
                Suite::Asymptotics,
                Suite::Traces,
                Suite::Mc,
            ],
            s => vec![s],
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "all" => Suite::All,
            "pde" => Suite::Pde,
            "adjoint" => Suite::Adjoint,
            "mass" => Suite::Mass,
            "comparison" => Suite::Comparison,
            "reproduction" => Suite::Reproduction,
            "asymptotics" => Suite::Asymptotics,
            "mc" => Suite::Mc,
            "traces" => Suite::Traces,
            "derivatives" => Suite::Derivatives,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown suite '{other}', expected one of {}",
                    Suite::NAMES.join(", ")
                )))
            }
        })
    }
}

/// Sample counts and seeds of a suite run.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub seed: u64,
    /// Samples of the residual sweeps; the derivative oracle uses twice this.
    pub samples: usize,
    pub comparison_samples: usize,
    pub fit_samples: usize,
    pub reproduction_samples: usize,
    pub trace_times: usize,
    pub mc_paths: u64,
    pub mc_dt: f64,
    pub solve: SolveConfig,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            samples: 100,
            comparison_samples: 10_000,
            fit_samples: 10_000,
            reproduction_samples: 5,
            trace_times: 20,
            mc_paths: 100_000,
            mc_dt: 1e-3,
            solve: SolveConfig::default(),
        }
    }
}

impl SuiteConfig {
    fn echo(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("samples".to_string(), self.samples.to_string());
        m.insert("comparison_samples".to_string(), self.comparison_samples.to_string());
        m.insert("fit_samples".to_string(), self.fit_samples.to_string());
        m.insert(
            "reproduction_samples".to_string(),
            self.reproduction_samples.to_string(),
        );
        m.insert("trace_times".to_string(), self.trace_times.to_string());
        m.insert("mc_paths".to_string(), self.mc_paths.to_string());
        m.insert("mc_dt".to_string(), format!("{}", self.mc_dt));
        m.insert("hermite_order".to_string(), self.solve.hermite_order.to_string());
        m
    }
}

/// Checks of one concrete suite, appended to `report`. Each check gets its
/// own seed derived from the master seed and the suite, so adding a suite
/// does not perturb the others.
pub fn run_into(spec: &OperatorSpec, suite: Suite, cfg: &SuiteConfig, report: &mut VerificationReport) -> Result<()> {
    let seed = cfg.seed ^ ((suite as u64 + 1) << 56);
    let n = spec.dim();
    let hermite_ok = n <= quadrature::MAX_TENSOR_DIM;
    match suite {
        Suite::All => {
            for s in suite.expand() {
                run_into(spec, s, cfg, report)?;
            }
        }
        Suite::Pde => report.checks.push(pde_sweep(spec, seed, 0..cfg.samples as u64)?),
        Suite::Adjoint => report.checks.push(adjoint_sweep(spec, seed, 0..cfg.samples as u64)?),
        Suite::Derivatives => report
            .checks
            .push(derivative_sweep(spec, seed, 0..2 * cfg.samples as u64)?),
        Suite::Mass => {
            if hermite_ok {
                report.checks.push(mass_check(spec, seed)?);
                report.checks.push(gauss_moment_selftest(n, seed)?);
            } else {
                report
                    .skipped
                    .push(format!("mass: N = {n} exceeds the tensor quadrature limit"));
            }
        }
        Suite::Comparison => {
            let range = 0..cfg.comparison_samples as u64;
            report.checks.push(comparison_sweep(spec, None, seed, range.clone())?);
            if spec.nu() == 1.0 {
                report.checks.push(comparison_equality_sweep(spec, seed, range)?);
            }
        }
        Suite::Reproduction => {
            if hermite_ok {
                report.checks.push(reproduction_sweep(
                    spec,
                    seed,
                    0..cfg.reproduction_samples as u64,
                    &cfg.solve,
                )?);
            } else {
                report
                    .skipped
                    .push(format!("reproduction: N = {n} exceeds the tensor quadrature limit"));
            }
        }
        Suite::Asymptotics => {
            report.checks.push(short_time_slope(spec)?.record());
            report
                .checks
                .push(fit_short_time_constants(spec, seed, cfg.fit_samples)?.record());
        }
        Suite::Traces => report.checks.push(trace_sweep(spec, cfg.trace_times)?),
        Suite::Mc => {
            let (x0, t0, t) = mc_setup(spec);
            let sde = SdeConfig::from_spec(spec, cfg.mc_paths, cfg.mc_dt)?;
            report
                .checks
                .push(mc_crosscheck(spec, &x0, t0, t, &sde, seed)?.record());
        }
    }
    Ok(())
}

/// Runs `suite` and collects a report.
pub fn run_suite(spec: &OperatorSpec, suite: Suite, cfg: &SuiteConfig) -> Result<VerificationReport> {
    let mut report = VerificationReport::empty(suite, cfg);
    run_into(spec, suite, cfg, &mut report)?;
    Ok(report)
}
