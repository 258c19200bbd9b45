//! The Cauchy problem `L u = 0` on `t > t0`, `u(., t0) = f`, solved through
//! `u(x,t) = int Gamma(x,t; y,t0) f(y) dy`.
//!
//! For callable data the integral is mapped onto the Gauss-Hermite weight by
//! `y = E(t-t0)^-1 (x - 2 L z)`, `L L' = C(t,t0)`, which turns it into
//! `pi^{-N/2} int e^{-|z|^2} f(y(z)) dz`. Sampled data use a trapezoid sum of
//! the kernel against the samples.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::{DMatrix, DVector};

use crate::covariance::{self, CovarianceBundle};
use crate::kernel::{self, to_vector};
use crate::linalg;
use crate::math;
use crate::operator::OperatorSpec;
use crate::quadrature::{self, Rule};
use crate::{Error, Result};

/// Pointwise evaluator of a datum.
pub type Evaluator = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Node-centred uniform grid on a box, `shape[k] >= 2` points per axis,
/// endpoints included. Samples are stored with the last axis fastest.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct UniformGrid {
    lower: Vec<f64>,
    upper: Vec<f64>,
    shape: Vec<usize>,
}

impl UniformGrid {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, shape: Vec<usize>) -> Result<Self> {
        if lower.len() != upper.len() || lower.len() != shape.len() || lower.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "grid box has {} lower, {} upper and {} shape entries",
                lower.len(),
                upper.len(),
                shape.len()
            )));
        }
        for k in 0..lower.len() {
            if !(lower[k].is_finite() && upper[k].is_finite()) {
                return Err(Error::NonFinite);
            }
            if !(upper[k] > lower[k]) || shape[k] < 2 {
                return Err(Error::InvalidArgument(format!(
                    "grid axis {k}: need lower < upper and at least 2 points"
                )));
            }
        }
        Ok(Self { lower, upper, shape })
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn step(&self, axis: usize) -> f64 {
        (self.upper[axis] - self.lower[axis]) / (self.shape[axis] - 1) as f64
    }

    fn coords(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for k in (0..self.dim()).rev() {
            idx[k] = flat % self.shape[k];
            flat /= self.shape[k];
        }
        idx
    }

    /// The `flat`-th grid point.
    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.coords(flat)
            .iter()
            .enumerate()
            .map(|(k, &i)| self.lower[k] + i as f64 * self.step(k))
            .collect()
    }

    /// Product trapezoid weight of the `flat`-th point.
    pub fn weight(&self, flat: usize) -> f64 {
        self.coords(flat)
            .iter()
            .enumerate()
            .map(|(k, &i)| {
                let h = self.step(k);
                if i == 0 || i + 1 == self.shape[k] {
                    0.5 * h
                } else {
                    h
                }
            })
            .product()
    }

    /// All points in storage order.
    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    /// Multilinear interpolation of `values`; zero outside the box.
    pub fn interpolate(&self, values: &[f64], y: &[f64]) -> f64 {
        let d = self.dim();
        let mut base = vec![0usize; d];
        let mut frac = vec![0.0; d];
        for k in 0..d {
            let u = (y[k] - self.lower[k]) / self.step(k);
            if !(u >= 0.0 && u <= (self.shape[k] - 1) as f64) {
                return 0.0;
            }
            let i = (libm::floor(u) as usize).min(self.shape[k] - 2);
            base[k] = i;
            frac[k] = u - i as f64;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut flat = 0;
            let mut w = 1.0;
            for k in 0..d {
                let up = (corner >> (d - 1 - k)) & 1;
                flat = flat * self.shape[k] + base[k] + up;
                w *= if up == 1 { frac[k] } else { 1.0 - frac[k] };
            }
            if w != 0.0 {
                acc += w * values[flat];
            }
        }
        acc
    }
}

/// Initial datum classes.
#[derive(Clone)]
pub enum CauchyDatum {
    /// Samples on a grid; zero outside the box.
    GridSampled { grid: UniformGrid, values: Vec<f64> },
    /// Bounded continuous `f` with `|f| <= sup`.
    Bounded { f: Evaluator, sup: f64 },
    /// `f` with `int |f(x)| e^{-alpha |x|^2} dx < inf`. The declaration is
    /// trusted; the usable horizon is derived from `alpha`.
    GaussianGrowth { f: Evaluator, alpha: f64 },
}

impl fmt::Debug for CauchyDatum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::GridSampled { grid, values } => f
                .debug_struct("GridSampled")
                .field("grid", grid)
                .field("samples", &values.len())
                .finish(),
            Self::Bounded { sup, .. } => f.debug_struct("Bounded").field("sup", sup).finish(),
            Self::GaussianGrowth { alpha, .. } => f.debug_struct("GaussianGrowth").field("alpha", alpha).finish(),
        }
    }
}

impl CauchyDatum {
    pub fn grid(grid: UniformGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} samples for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self::GridSampled { grid, values })
    }

    /// Samples `f` on `grid`.
    pub fn sample(grid: UniformGrid, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = grid.points().iter().map(|p| f(p)).collect();
        Self::grid(grid, values)
    }

    pub fn bounded(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static, sup: f64) -> Result<Self> {
        if !(sup >= 0.0 && sup.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sup bound must be finite and >= 0, got {sup}"
            )));
        }
        Ok(Self::Bounded { f: Arc::new(f), sup })
    }

    pub fn gaussian_growth(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
        }
        Ok(Self::GaussianGrowth { f: Arc::new(f), alpha })
    }

    /// `f(y)`; sampled data are interpolated.
    pub fn eval(&self, y: &[f64]) -> f64 {
        match self {
            Self::GridSampled { grid, values } => grid.interpolate(values, y),
            Self::Bounded { f, .. } | Self::GaussianGrowth { f, .. } => f(y),
        }
    }

    pub fn growth_alpha(&self) -> Option<f64> {
        match self {
            Self::GaussianGrowth { alpha, .. } => Some(*alpha),
            _ => None,
        }
    }
}

/// Quadrature settings of the solver.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SolveConfig {
    /// Gauss-Hermite points per dimension, at least 8.
    pub hermite_order: usize,
    /// Fraction of the raw horizon that may be used, in (0, 1).
    pub horizon_safety: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            hermite_order: 40,
            horizon_safety: 0.5,
        }
    }
}

impl SolveConfig {
    pub const MIN_HERMITE_ORDER: usize = 8;

    pub fn validate(&self) -> Result<()> {
        if self.hermite_order < Self::MIN_HERMITE_ORDER {
            return Err(Error::InvalidArgument(format!(
                "hermite order {} is below {}",
                self.hermite_order,
                Self::MIN_HERMITE_ORDER
            )));
        }
        if !(self.horizon_safety > 0.0 && self.horizon_safety < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "horizon safety must lie in (0, 1), got {}",
                self.horizon_safety
            )));
        }
        Ok(())
    }
}

/// Largest admissible span for a Gaussian-growth datum.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Horizon {
    /// Sup of spans with `lambda_min(C'(t0 + span, t0)) / 4 > alpha`.
    pub raw: f64,
    /// `safety * raw`.
    pub usable: f64,
}

/// Upper end of the horizon search bracket.
pub const HORIZON_CAP: f64 = 1e3;
const HORIZON_RTOL: f64 = 1e-10;

/// `lambda_min(C'(t0 + span, t0)) / 4 > alpha`; overflow of the propagator
/// counts as inadmissible.
fn horizon_admits(spec: &OperatorSpec, t0: f64, span: f64, alpha: f64) -> Result<bool> {
    let bundle = match covariance::covariance(spec, t0, t0 + span) {
        Ok(b) => b,
        Err(Error::Overflow { .. }) | Err(Error::NotPositiveDefinite) => return Ok(false),
        Err(e) => return Err(e),
    };
    let lmin = match linalg::symmetric_eigenvalues(bundle.conjugated_inverse()) {
        Ok(ev) => ev[0],
        Err(_) => return Ok(false),
    };
    Ok(0.25 * lmin > alpha)
}

/// Horizon of a datum with Gaussian growth rate `alpha`, starting at `t0`.
///
/// `lambda_min(C'(t0 + s, t0))` decreases in `s`, so the admissible spans form
/// an interval `(0, T)`; `T` is located by bisection, capped at
/// [`HORIZON_CAP`].
pub fn horizon(spec: &OperatorSpec, t0: f64, alpha: f64, safety: f64) -> Result<Horizon> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    if !(safety > 0.0 && safety <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "safety must lie in (0, 1], got {safety}"
        )));
    }
    if horizon_admits(spec, t0, HORIZON_CAP, alpha)? {
        return Ok(Horizon {
            raw: HORIZON_CAP,
            usable: safety * HORIZON_CAP,
        });
    }
    let mut hi = HORIZON_CAP;
    let mut lo = 1.0f64.min(0.5 * hi);
    let mut halvings = 0;
    while !horizon_admits(spec, t0, lo, alpha)? {
        hi = lo;
        lo *= 0.5;
        halvings += 1;
        if halvings > 200 {
            return Err(Error::NoPositiveHorizon { alpha });
        }
    }
    while hi - lo > HORIZON_RTOL * lo {
        let mid = 0.5 * (lo + hi);
        if horizon_admits(spec, t0, mid, alpha)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let raw = 0.5 * (lo + hi);
    Ok(Horizon {
        raw,
        usable: safety * raw,
    })
}

enum Method {
    Hermite {
        rule: Rule,
        /// `E(t-t0)^-1`.
        e_inv: DMatrix<f64>,
        /// `2 E^-1 L`.
        spread: DMatrix<f64>,
    },
    Grid,
}

/// Everything needed to evaluate `u(., t)` for one `(t0, t)` pair.
pub struct SolvePlan<'a> {
    datum: &'a CauchyDatum,
    bundle: CovarianceBundle,
    method: Method,
}

impl<'a> SolvePlan<'a> {
    pub fn new(spec: &OperatorSpec, datum: &'a CauchyDatum, t0: f64, t: f64, cfg: &SolveConfig) -> Result<Self> {
        cfg.validate()?;
        if !(t > t0) {
            return Err(Error::NotAfterInitialTime { t0, t });
        }
        let n = spec.dim();
        if let Some(alpha) = datum.growth_alpha() {
            let h = horizon(spec, t0, alpha, cfg.horizon_safety)?;
            if t - t0 >= h.usable {
                return Err(Error::HorizonExceeded {
                    requested: t - t0,
                    horizon: h.usable,
                    raw: h.raw,
                });
            }
        }
        let bundle = covariance::covariance(spec, t0, t)?;
        let method = match datum {
            CauchyDatum::GridSampled { grid, .. } => {
                if grid.dim() != n {
                    return Err(Error::DimensionMismatch(format!(
                        "datum grid is {}-dimensional, operator has N = {n}",
                        grid.dim()
                    )));
                }
                Method::Grid
            }
            _ => {
                if n > quadrature::MAX_TENSOR_DIM {
                    return Err(Error::UnsupportedDimension(n));
                }
                let e_inv = covariance::propagator(spec, -(t - t0))?;
                let spread = &e_inv * bundle.factor().lower() * 2.0;
                Method::Hermite {
                    rule: quadrature::gauss_hermite(cfg.hermite_order),
                    e_inv,
                    spread,
                }
            }
        };
        Ok(Self { datum, bundle, method })
    }

    pub fn bundle(&self) -> &CovarianceBundle {
        &self.bundle
    }

    /// `u(x, t)`.
    pub fn at(&self, x: &[f64]) -> Result<f64> {
        let n = self.bundle.dim();
        let xv = to_vector(x, n, "x")?;
        let u = match (&self.method, self.datum) {
            (Method::Hermite { rule, e_inv, spread }, datum) => {
                let center = e_inv * &xv;
                let mut y = vec![0.0; n];
                let mut acc = 0.0;
                quadrature::for_each_tensor_node(rule, n, |z, w| {
                    for (i, yi) in y.iter_mut().enumerate() {
                        let mut s = center[i];
                        for (j, zj) in z.iter().enumerate() {
                            s -= spread[(i, j)] * zj;
                        }
                        *yi = s;
                    }
                    acc += w * datum.eval(&y);
                })?;
                acc * math::powf(math::PI, -0.5 * n as f64)
            }
            (Method::Grid, CauchyDatum::GridSampled { grid, values }) => {
                let mut acc = 0.0;
                for (j, &v) in values.iter().enumerate() {
                    if v == 0.0 {
                        continue;
                    }
                    let y = DVector::from_vec(grid.point(j));
                    let g = math::exp(kernel::log_gamma_in(&self.bundle, &xv, &y));
                    acc += grid.weight(j) * g * v;
                }
                acc
            }
            (Method::Grid, _) => unreachable!("grid method is only built for sampled data"),
        };
        if u.is_finite() {
            Ok(u)
        } else {
            Err(Error::NonFinite)
        }
    }
}

/// `u(x, t)` for the datum prescribed at `t0`.
pub fn solve_at(
    spec: &OperatorSpec,
    datum: &CauchyDatum,
    t0: f64,
    x: &[f64],
    t: f64,
    cfg: &SolveConfig,
) -> Result<f64> {
    SolvePlan::new(spec, datum, t0, t, cfg)?.at(x)
}

/// Largest Gauss-Hermite order [`reproduction_residual`] doubles up to, by
/// dimension.
const REPRODUCTION_MAX_ORDER: [usize; 3] = [640, 320, 160];
/// Doubling stops once successive estimates agree to this.
const REPRODUCTION_STABLE: f64 = 1e-12;

/// `|Gamma(x,t;y,s) - int Gamma(x,t;z,tau) Gamma(z,tau;y,s) dz| / Gamma(x,t;y,s)`,
/// with the integral taken by Gauss-Hermite in the Gaussian variable of the
/// second factor.
///
/// In those variables the first factor can be a thin ridge (its covariance is
/// transported by `E(t - tau)`), so the order is doubled from
/// `cfg.hermite_order` until the estimate is stable or the dimension's cap is
/// reached.
#[allow(clippy::too_many_arguments)]
pub fn reproduction_residual(
    spec: &OperatorSpec,
    x: &[f64],
    t: f64,
    y: &[f64],
    s: f64,
    tau: f64,
    cfg: &SolveConfig,
) -> Result<f64> {
    cfg.validate()?;
    if !(s < tau && tau < t) {
        return Err(Error::InvalidArgument(format!(
            "need s < tau < t, got s = {s}, tau = {tau}, t = {t}"
        )));
    }
    let n = spec.dim();
    if n > quadrature::MAX_TENSOR_DIM {
        return Err(Error::UnsupportedDimension(n));
    }
    let xv = to_vector(x, n, "x")?;
    let yv = to_vector(y, n, "y")?;
    let whole = covariance::covariance(spec, s, t)?;
    let first = covariance::covariance(spec, tau, t)?;
    let second = covariance::covariance(spec, s, tau)?;
    let lhs = kernel::log_gamma_in(&whole, &xv, &yv);

    // z = E(tau - s) y + 2 L w with L L' = C(tau, s)
    let center = second.propagator() * &yv;
    let spread = second.factor().lower() * 2.0;
    let scale = math::powf(math::PI, -0.5 * n as f64) * math::exp(-(tau - s) * spec.trace_drift());
    let ratio_at = |order: usize| -> Result<f64> {
        let rule = quadrature::gauss_hermite(order);
        let mut acc = 0.0;
        let mut z = DVector::zeros(n);
        quadrature::for_each_tensor_node(&rule, n, |w, weight| {
            z.copy_from(&center);
            for i in 0..n {
                for (j, wj) in w.iter().enumerate() {
                    z[i] += spread[(i, j)] * wj;
                }
            }
            // divided by Gamma(x,t;y,s) to stay in range
            acc += weight * math::exp(kernel::log_gamma_in(&first, &xv, &z) - lhs);
        })?;
        Ok(acc * scale)
    };
    let cap = REPRODUCTION_MAX_ORDER[n - 1].max(cfg.hermite_order);
    let mut order = cfg.hermite_order;
    let mut ratio = ratio_at(order)?;
    while 2 * order <= cap {
        order *= 2;
        let next = ratio_at(order)?;
        let change = (next - ratio).abs();
        ratio = next;
        if change <= REPRODUCTION_STABLE * ratio.abs() {
            break;
        }
    }
    Ok((ratio - 1.0).abs())
}

/// How the discrepancy `u(., t) - f` is measured in [`initial_trace_report`].
#[derive(Debug, Clone, PartialEq)]
pub enum TraceMode {
    /// Trapezoid `L^p` norm over the grid.
    Lp { p: f64, grid: UniformGrid },
    /// Maximum over the grid points.
    Uniform { grid: UniformGrid },
    /// `|u(x0 + span * (1, .., 1), t0 + span) - f(x0)|`.
    Pointwise { x0: Vec<f64> },
}

/// Discrepancies along a schedule of spans `t - t0`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TraceReport {
    pub spans: Vec<f64>,
    pub discrepancies: Vec<f64>,
    /// Non-increasing as the span shrinks.
    pub monotone: bool,
    pub final_value: f64,
}

/// Default schedule `10^-k`, `k = 1..5`.
pub fn default_trace_schedule() -> Vec<f64> {
    (1..=5).map(|k| math::powf(10.0, -(k as f64))).collect()
}

/// Measures how `u(., t0 + span)` approaches the datum as the span shrinks.
/// `spans` should be decreasing; pass [`default_trace_schedule`] if unsure.
pub fn initial_trace_report(
    spec: &OperatorSpec,
    datum: &CauchyDatum,
    t0: f64,
    mode: &TraceMode,
    spans: &[f64],
    cfg: &SolveConfig,
) -> Result<TraceReport> {
    let n = spec.dim();
    let mut discrepancies = Vec::with_capacity(spans.len());
    for &span in spans {
        let plan = SolvePlan::new(spec, datum, t0, t0 + span, cfg)?;
        let d = match mode {
            TraceMode::Lp { p, grid } => {
                if !(*p >= 1.0) {
                    return Err(Error::InvalidArgument(format!("p must be >= 1, got {p}")));
                }
                check_grid_dim(grid, n)?;
                let mut acc = 0.0;
                for j in 0..grid.len() {
                    let y = grid.point(j);
                    let diff = (plan.at(&y)? - datum.eval(&y)).abs();
                    acc += grid.weight(j) * math::powf(diff, *p);
                }
                math::powf(acc, 1.0 / p)
            }
            TraceMode::Uniform { grid } => {
                check_grid_dim(grid, n)?;
                let mut worst = 0.0f64;
                for y in grid.points() {
                    worst = worst.max((plan.at(&y)? - datum.eval(&y)).abs());
                }
                worst
            }
            TraceMode::Pointwise { x0 } => {
                let x: Vec<f64> = x0.iter().map(|v| v + span).collect();
                (plan.at(&x)? - datum.eval(x0)).abs()
            }
        };
        discrepancies.push(d);
    }
    let monotone = discrepancies.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-15);
    let final_value = discrepancies.last().copied().unwrap_or(f64::NAN);
    Ok(TraceReport {
        spans: spans.to_vec(),
        discrepancies,
        monotone,
        final_value,
    })
}

fn check_grid_dim(grid: &UniformGrid, n: usize) -> Result<()> {
    if grid.dim() == n {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "grid is {}-dimensional, operator has N = {n}",
            grid.dim()
        )))
    }
}

/// Estimate of `int_{t0}^{t0+T} int |u(x,t)| e^{-C |x|^2} dx dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GrowthCertificate {
    pub estimate: f64,
    /// Relative change against the estimate at half the spatial order.
    pub order_change: f64,
}

/// Time nodes of the certificate (Gauss-Legendre, never at `t0`).
const CERTIFICATE_TIME_NODES: usize = 8;
/// Spatial Gauss-Hermite order of the certificate.
pub const CERTIFICATE_SPACE_ORDER: usize = 16;

/// Finite estimate of the growth-class integral that singles out the
/// unique solution. The spatial weight is absorbed into a Gauss-Hermite rule
/// (`x = z / sqrt(C)`), so no truncation box is needed; stability is reported
/// by halving the spatial order.
pub fn growth_class_certificate(
    spec: &OperatorSpec,
    datum: &CauchyDatum,
    t0: f64,
    span: f64,
    c_growth: f64,
    cfg: &SolveConfig,
) -> Result<GrowthCertificate> {
    if !(span > 0.0) {
        return Err(Error::NotAfterInitialTime { t0, t: t0 + span });
    }
    if !(c_growth > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "growth constant must be positive, got {c_growth}"
        )));
    }
    let n = spec.dim();
    if n > quadrature::MAX_TENSOR_DIM {
        return Err(Error::UnsupportedDimension(n));
    }
    if let Some(alpha) = datum.growth_alpha() {
        let h = horizon(spec, t0, alpha, cfg.horizon_safety)?;
        if span > h.usable {
            return Err(Error::HorizonExceeded {
                requested: span,
                horizon: h.usable,
                raw: h.raw,
            });
        }
    }
    let time_rule = quadrature::gauss_legendre(CERTIFICATE_TIME_NODES);
    let fine = quadrature::gauss_hermite(CERTIFICATE_SPACE_ORDER);
    let coarse = quadrature::gauss_hermite(CERTIFICATE_SPACE_ORDER / 2);
    let scale = 1.0 / math::sqrt(c_growth);
    let mut est = [0.0, 0.0];
    for (&node, &tw) in time_rule.nodes.iter().zip(&time_rule.weights) {
        let t = t0 + 0.5 * span * (node + 1.0);
        let plan = SolvePlan::new(spec, datum, t0, t, cfg)?;
        for (k, rule) in [&fine, &coarse].into_iter().enumerate() {
            let mut acc = 0.0;
            let mut err = None;
            let mut x = vec![0.0; n];
            quadrature::for_each_tensor_node(rule, n, |z, w| {
                if err.is_some() {
                    return;
                }
                for (xi, zi) in x.iter_mut().zip(z) {
                    *xi = zi * scale;
                }
                // e^{-C |x|^2} dx = C^{-N/2} e^{-|z|^2} dz
                match plan.at(&x) {
                    Ok(u) => acc += w * u.abs(),
                    Err(e) => err = Some(e),
                }
            })?;
            if let Some(e) = err {
                return Err(e);
            }
            est[k] += 0.5 * span * tw * acc * math::powf(scale, n as f64);
        }
    }
    let order_change = (est[0] - est[1]).abs() / est[0].abs().max(f64::MIN_POSITIVE);
    Ok(GrowthCertificate {
        estimate: est[0],
        order_change,
    })
}
