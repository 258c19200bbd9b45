//! The fundamental solution `Gamma`, its model counterparts `Gamma_alpha`,
//! closed-form derivatives and the two-sided comparison bounds.
//!
//! Everything is evaluated in the log domain and exponentiated last:
//! quadratic forms of size `1e5` are routine near the pole, and a value of
//! exactly 0 with `log_value = -inf` is a legitimate answer.

use alloc::format;

use nalgebra::{DMatrix, DVector};

use crate::covariance::{self, CovarianceBundle};
use crate::math;
use crate::operator::OperatorSpec;
use crate::{Error, Result};

/// A kernel value with its logarithm.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KernelEval {
    pub value: f64,
    pub log_value: f64,
}

impl KernelEval {
    /// The value below the pole (`t <= t0`).
    pub const ZERO: Self = Self {
        value: 0.0,
        log_value: f64::NEG_INFINITY,
    };

    pub fn from_log(log_value: f64) -> Self {
        Self {
            value: math::exp(log_value),
            log_value,
        }
    }
}

pub(crate) fn to_vector(v: &[f64], n: usize, what: &str) -> Result<DVector<f64>> {
    if v.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{what} has {} components, expected {n}",
            v.len()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(DVector::from_column_slice(v))
}

fn log_normalizer(n: usize, alpha: f64) -> f64 {
    -0.5 * n as f64 * math::ln(4.0 * math::PI * alpha)
}

/// `ln Gamma(x, t; x0, t0)` for the bundle's `(t0, t)`.
pub fn log_gamma_in(bundle: &CovarianceBundle, x: &DVector<f64>, x0: &DVector<f64>) -> f64 {
    log_normalizer(bundle.dim(), 1.0)
        - 0.5 * bundle.log_det()
        - 0.25 * bundle.quad_form(x, x0)
        - bundle.span() * bundle.trace_drift()
}

/// `ln Gamma_alpha(x, t; x0, t0)` from the model bundle `C0(t - t0)`.
pub fn log_gamma_model_in(model: &CovarianceBundle, alpha: f64, x: &DVector<f64>, x0: &DVector<f64>) -> f64 {
    log_normalizer(model.dim(), alpha)
        - 0.5 * model.log_det()
        - 0.25 * model.quad_form(x, x0) / alpha
        - model.span() * model.trace_drift()
}

/// `Gamma(x, t; x0, t0)`, zero for `t <= t0`.
pub fn gamma(spec: &OperatorSpec, x: &[f64], t: f64, x0: &[f64], t0: f64) -> Result<KernelEval> {
    let n = spec.dim();
    let xv = to_vector(x, n, "x")?;
    let x0v = to_vector(x0, n, "x0")?;
    if t <= t0 {
        return Ok(KernelEval::ZERO);
    }
    let bundle = covariance::covariance(spec, t0, t)?;
    Ok(KernelEval::from_log(log_gamma_in(&bundle, &xv, &x0v)))
}

/// Kernel of the model operator with `A0 = alpha I_q` and the same drift.
pub fn gamma_model(spec: &OperatorSpec, alpha: f64, x: &[f64], t: f64, x0: &[f64], t0: f64) -> Result<KernelEval> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    let n = spec.dim();
    let xv = to_vector(x, n, "x")?;
    let x0v = to_vector(x0, n, "x0")?;
    if t <= t0 {
        return Ok(KernelEval::ZERO);
    }
    let model = covariance::model_covariance(spec, t - t0)?;
    Ok(KernelEval::from_log(log_gamma_model_in(&model, alpha, &xv, &x0v)))
}

/// First and second derivatives of `Gamma(x, t; y, s)` in `x` and in `y`,
/// plus `dGamma/dt` from the equation itself.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivBundle {
    pub value: f64,
    pub grad_x: DVector<f64>,
    pub hess_x: DMatrix<f64>,
    pub grad_y: DVector<f64>,
    pub hess_y: DMatrix<f64>,
    /// `sum a_ij(t) d2Gamma/dx_i dx_j + sum b_jk x_k dGamma/dx_j`, valid for
    /// a.e. `t`.
    pub dt: f64,
}

/// Closed-form derivatives from an existing bundle for `(s, t)`.
///
/// With `w = C^-1 (x - E y)` and `v = C'(y - E^-1 x) = -E' w`:
/// `grad_x = -Gamma w / 2`, `hess_x = Gamma (w w'/4 - C^-1/2)`, and the same
/// with `v`, `C'` for `y`.
pub fn derivatives_in(
    spec: &OperatorSpec,
    bundle: &CovarianceBundle,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> DerivBundle {
    let value = math::exp(log_gamma_in(bundle, x, y));
    let r = bundle.offset(x, y);
    let w = bundle.factor().solve(&r);
    let v = -(bundle.propagator().transpose() * &w);

    let grad_x = &w * (-0.5 * value);
    let mut hess_x = (&w * w.transpose()) * 0.25 - bundle.inverse() * 0.5;
    hess_x *= value;
    let grad_y = &v * (-0.5 * value);
    let mut hess_y = (&v * v.transpose()) * 0.25 - bundle.conjugated_inverse() * 0.5;
    hess_y *= value;
    let hess_x = crate::linalg::symmetrize(&hess_x);
    let hess_y = crate::linalg::symmetrize(&hess_y);

    let a = spec.track().coefficient_at(bundle.t());
    let q = a.nrows();
    let diffusion = hess_x.view((0, 0), (q, q)).dot(a);
    let transport = (spec.drift() * x).dot(&grad_x);

    DerivBundle {
        value,
        grad_x,
        hess_x,
        grad_y,
        hess_y,
        dt: diffusion + transport,
    }
}

/// Derivatives of `Gamma(x, t; y, s)`; requires `t > s`.
pub fn derivatives(spec: &OperatorSpec, x: &[f64], t: f64, y: &[f64], s: f64) -> Result<DerivBundle> {
    let n = spec.dim();
    let xv = to_vector(x, n, "x")?;
    let yv = to_vector(y, n, "y")?;
    if !(t > s) {
        return Err(Error::NotAfterInitialTime { t0: s, t });
    }
    let bundle = covariance::covariance(spec, s, t)?;
    Ok(derivatives_in(spec, &bundle, &xv, &yv))
}

/// `nu^N Gamma_nu` and `nu^-N Gamma_{1/nu}`, which bracket `Gamma`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ComparisonBounds {
    pub lower: KernelEval,
    pub upper: KernelEval,
}

pub(crate) fn comparison_in(
    model: &CovarianceBundle,
    nu: f64,
    x: &DVector<f64>,
    x0: &DVector<f64>,
) -> ComparisonBounds {
    let n = model.dim() as f64;
    let ln_nu = math::ln(nu);
    ComparisonBounds {
        lower: KernelEval::from_log(n * ln_nu + log_gamma_model_in(model, nu, x, x0)),
        upper: KernelEval::from_log(-n * ln_nu + log_gamma_model_in(model, 1.0 / nu, x, x0)),
    }
}

/// Comparison bounds with the operator's ellipticity constant.
pub fn comparison_bounds(spec: &OperatorSpec, x: &[f64], t: f64, x0: &[f64], t0: f64) -> Result<ComparisonBounds> {
    comparison_bounds_with(spec, spec.nu(), x, t, x0, t0)
}

/// Comparison bounds for an arbitrary `nu` (which need not be valid).
pub fn comparison_bounds_with(
    spec: &OperatorSpec,
    nu: f64,
    x: &[f64],
    t: f64,
    x0: &[f64],
    t0: f64,
) -> Result<ComparisonBounds> {
    if !(nu > 0.0) {
        return Err(Error::InvalidArgument(format!("nu must be positive, got {nu}")));
    }
    let n = spec.dim();
    let xv = to_vector(x, n, "x")?;
    let x0v = to_vector(x0, n, "x0")?;
    if !(t > t0) {
        return Err(Error::NotAfterInitialTime { t0, t });
    }
    let model = covariance::model_covariance(spec, t - t0)?;
    Ok(comparison_in(&model, nu, &xv, &x0v))
}

/// Constants `(c, delta)` of the short-time Gaussian envelope
/// `Gamma <= (c (t-t0)^{Q/2})^-1 exp(-c |x - E x0|^2 / (t-t0))` for
/// `0 < t - t0 <= delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ShortTimeConstants {
    pub c: f64,
    pub delta: f64,
}

/// Log of the envelope at a given offset norm and span.
pub fn short_time_log_bound(consts: ShortTimeConstants, q_dim: u32, offset_sq: f64, span: f64) -> f64 {
    -math::ln(consts.c) - 0.5 * q_dim as f64 * math::ln(span) - consts.c * offset_sq / span
}

/// The short-time envelope at `(x, t)`. Only a diagnostic: the constants are
/// fitted, see [`crate::verify::fit_short_time_constants`].
pub fn short_time_upper(
    spec: &OperatorSpec,
    x: &[f64],
    t: f64,
    x0: &[f64],
    t0: f64,
    consts: ShortTimeConstants,
) -> Result<KernelEval> {
    let n = spec.dim();
    let xv = to_vector(x, n, "x")?;
    let x0v = to_vector(x0, n, "x0")?;
    let span = t - t0;
    if !(span > 0.0) {
        return Err(Error::NotAfterInitialTime { t0, t });
    }
    if span > consts.delta {
        return Err(Error::HorizonExceeded {
            requested: span,
            horizon: consts.delta,
            raw: consts.delta,
        });
    }
    let e = covariance::propagator(spec, span)?;
    let offset_sq = (xv - e * x0v).norm_squared();
    Ok(KernelEval::from_log(short_time_log_bound(
        consts,
        spec.structure().homogeneous_dim(),
        offset_sq,
        span,
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use approx::assert_relative_eq;

    #[test]
    fn heat_kernel_at_origin() {
        let g = gamma(&fixtures::heat(), &[0.0], 1.0, &[0.0], 0.0).unwrap();
        assert_relative_eq!(g.value, 0.282_094_791_773_878_1, max_relative = 1e-14);
        for &(x, t) in &[(0.7, 0.3), (-2.0, 4.0)] {
            let g = gamma(&fixtures::heat(), &[x], t, &[0.0], 0.0).unwrap();
            let exact = (-x * x / (4.0 * t)).exp() / (4.0 * math::PI * t).sqrt();
            assert_relative_eq!(g.value, exact, max_relative = 1e-13);
        }
    }

    #[test]
    fn kolmogorov_closed_form() {
        let k = fixtures::kolmogorov();
        let g = gamma(&k, &[0.0, 0.0], 1.0, &[0.0, 0.0], 0.0).unwrap();
        assert_relative_eq!(g.value, 3f64.sqrt() / (2.0 * math::PI), max_relative = 1e-13);
        // explicit model kernel with alpha = 0.7
        let (a, t, x1, x2) = (0.7, 1.3, 0.4, -0.9);
        let exact = 3f64.sqrt() / (2.0 * math::PI * a * t * t)
            * (-(x1 * x1 / t + 3.0 * x1 * x2 / (t * t) + 3.0 * x2 * x2 / (t * t * t)) / a).exp();
        let g = gamma_model(&k, a, &[x1, x2], t, &[0.0, 0.0], 0.0).unwrap();
        assert_relative_eq!(g.value, exact, max_relative = 1e-12);
    }

    #[test]
    fn vanishes_below_the_pole() {
        let k = fixtures::kolmogorov();
        for t in [0.0, -1.0] {
            let g = gamma(&k, &[0.1, 0.2], t, &[0.0, 0.0], 0.0).unwrap();
            assert_eq!(g, KernelEval::ZERO);
        }
    }

    #[test]
    fn far_field_is_zero_in_value_but_finite_in_log() {
        let h = fixtures::heat();
        let g = gamma(&h, &[1e3], 1e-3, &[0.0], 0.0).unwrap();
        assert_eq!(g.value, 0.0);
        assert!(g.log_value.is_finite() && g.log_value < -1e8);
    }

    #[test]
    fn dimension_mismatch() {
        let k = fixtures::kolmogorov();
        assert!(matches!(
            gamma(&k, &[0.0], 1.0, &[0.0, 0.0], 0.0),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn model_matches_constant_coefficient_kernel() {
        let k = fixtures::kolmogorov_with(2.5);
        let g = gamma(&k, &[0.3, -0.2], 2.0, &[1.0, 0.5], 0.5).unwrap();
        let m = gamma_model(&k, 2.5, &[0.3, -0.2], 2.0, &[1.0, 0.5], 0.5).unwrap();
        assert_relative_eq!(g.value, m.value, max_relative = 1e-12);
        let h = fixtures::heat();
        let m = gamma_model(&h, 1.0, &[0.5], 2.0, &[0.0], 0.0).unwrap();
        let exact = (-0.25f64 / 8.0).exp() / (8.0 * math::PI).sqrt();
        assert_relative_eq!(m.value, exact, max_relative = 1e-13);
    }

    #[test]
    fn gradient_vanishes_on_the_moving_center() {
        let k = fixtures::kolmogorov();
        let y = [0.3, -1.0];
        let e = covariance::propagator(&k, 1.5).unwrap();
        let center = &e * DVector::from_column_slice(&y);
        let d = derivatives(&k, center.as_slice(), 2.0, &y, 0.5).unwrap();
        assert!(d.grad_x.amax() < 1e-15);
        assert!(d.grad_y.amax() < 1e-15);
    }

    #[test]
    fn heat_gradient() {
        let d = derivatives(&fixtures::heat(), &[0.8], 1.0, &[0.0], 0.0).unwrap();
        assert_relative_eq!(d.grad_x[0], -0.4 * d.value, max_relative = 1e-13);
        // d/dt = d2/dx2 for the heat kernel
        assert_relative_eq!(d.dt, d.hess_x[(0, 0)], max_relative = 1e-15);
    }

    #[test]
    fn comparison_is_tight_for_unit_coefficients() {
        let k = fixtures::kolmogorov();
        let b = comparison_bounds(&k, &[0.5, -0.5], 1.2, &[0.1, 0.0], 0.2).unwrap();
        let g = gamma(&k, &[0.5, -0.5], 1.2, &[0.1, 0.0], 0.2).unwrap();
        assert_relative_eq!(b.lower.value, g.value, max_relative = 1e-12);
        assert_relative_eq!(b.upper.value, g.value, max_relative = 1e-12);
    }

    #[test]
    fn comparison_strict_for_piecewise_coefficients() {
        let p = fixtures::kolmogorov_piecewise();
        let b = comparison_bounds(&p, &[1.0, 1.0], 1.0, &[0.0, 0.0], 0.0).unwrap();
        let g = gamma(&p, &[1.0, 1.0], 1.0, &[0.0, 0.0], 0.0).unwrap();
        assert!(b.lower.value < g.value && g.value < b.upper.value);
    }

    #[test]
    fn comparison_for_scaled_heat() {
        // a = 2 with nu = 1/2: Gamma = Gamma_2 = nu^N * upper
        let spec = OperatorSpec::new(
            DMatrix::zeros(1, 1),
            &[1],
            crate::operator::CoefficientTrack::scalar(1, 2.0).unwrap(),
            None,
        )
        .unwrap();
        assert_eq!(spec.nu(), 0.5);
        let b = comparison_bounds(&spec, &[0.0], 1.0, &[0.0], 0.0).unwrap();
        let g = gamma(&spec, &[0.0], 1.0, &[0.0], 0.0).unwrap();
        assert_relative_eq!(g.value, 0.5 * b.upper.value, max_relative = 1e-13);
        assert!(b.lower.value <= g.value);
    }

    #[test]
    fn short_time_envelope() {
        let h = fixtures::heat();
        let consts = ShortTimeConstants { c: 0.25, delta: 0.5 };
        for &x in &[0.0, 0.05, 0.3] {
            let g = gamma(&h, &[x], 0.01, &[0.0], 0.0).unwrap();
            let u = short_time_upper(&h, &[x], 0.01, &[0.0], 0.0, consts).unwrap();
            assert!(g.value <= u.value);
        }
        // far away both underflow; compare logs
        let g = gamma(&h, &[10.0], 0.01, &[0.0], 0.0).unwrap();
        let u = short_time_upper(&h, &[10.0], 0.01, &[0.0], 0.0, consts).unwrap();
        assert!(g.value < 1e-300 && u.value < 1e-300);
        assert!(g.log_value <= u.log_value);
        assert!(matches!(
            short_time_upper(&h, &[0.0], 0.6, &[0.0], 0.0, consts),
            Err(Error::HorizonExceeded { .. })
        ));
    }
}
