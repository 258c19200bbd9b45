//! The propagator `E(s) = exp(-sB)`, the covariance
//! `C(t,t0) = int_{t0}^{t} E(t-s) A(s) E(t-s)' ds`, its conjugated inverse
//! `C'(t,s) = E(t-s)' C(t,s)^-1 E(t-s)`, and the identities they satisfy.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{self, SpdFactor};
use crate::operator::OperatorSpec;
use crate::{Error, Result};

/// Relative tolerance of the adaptive panel refinement.
pub const QUADRATURE_RTOL: f64 = 1e-12;
const MAX_BISECTION_DEPTH: usize = 30;

/// Positive Gauss-Legendre nodes and weights, 16 points on [-1, 1].
const GL16: [(f64, f64); 8] = [
    (0.095_012_509_837_637_44, 0.189_450_610_455_068_5),
    (0.281_603_550_779_258_9, 0.182_603_415_044_923_6),
    (0.458_016_777_657_227_4, 0.169_156_519_395_002_5),
    (0.617_876_244_402_643_7, 0.149_595_988_816_576_7),
    (0.755_404_408_355_003, 0.124_628_971_255_533_9),
    (0.865_631_202_387_831_7, 0.095_158_511_682_492_78),
    (0.944_575_023_073_232_6, 0.062_253_523_938_647_89),
    (0.989_400_934_991_649_9, 0.027_152_459_411_754_09),
];

/// `E(s) = exp(-s B)`.
pub fn propagator(spec: &OperatorSpec, s: f64) -> Result<DMatrix<f64>> {
    linalg::mat_exp(spec.drift(), -s)
}

/// Step of the central differences used by the a.e. identities.
pub fn fd_step(t: f64) -> f64 {
    1e-6 * t.abs().max(1.0)
}

/// Fails if `t` is within `10 h` of a coefficient jump.
pub fn check_off_breakpoint(spec: &OperatorSpec, t: f64, h: f64) -> Result<()> {
    let window = 10.0 * h;
    match spec.track().nearest_jump(t) {
        Some((dist, breakpoint)) if dist < window => Err(Error::BreakpointTooClose { t, breakpoint, window }),
        _ => Ok(()),
    }
}

struct Integrand<'a> {
    drift: &'a DMatrix<f64>,
    a0: &'a DMatrix<f64>,
    t: f64,
}

/// `E(h x_k)` and `E(-h x_k)` for the GL nodes of a panel of half-width `h`.
/// Panels at one bisection depth share `h`, so these are built once per depth.
type NodeOffsets = Vec<(DMatrix<f64>, DMatrix<f64>)>;

impl Integrand<'_> {
    fn offsets(&self, half: f64) -> Result<NodeOffsets> {
        GL16.iter()
            .map(|&(x, _)| {
                Ok((
                    linalg::mat_exp(self.drift, -half * x)?,
                    linalg::mat_exp(self.drift, half * x)?,
                ))
            })
            .collect()
    }

    /// `sum_k w_k G_k A G_k'` with `G_k` the first `q` columns of
    /// `E(t - s_k) = E(t - mid) E(mid - s_k)`.
    fn panel(&self, a: f64, b: f64, offsets: &NodeOffsets) -> Result<DMatrix<f64>> {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let n = self.drift.nrows();
        let q = self.a0.nrows();
        let centre = linalg::mat_exp(self.drift, -(self.t - mid))?;
        let mut acc = DMatrix::zeros(n, n);
        for (&(_, w), (before, after)) in GL16.iter().zip(offsets) {
            // s = mid - h x lies before mid: E(t - s) = E(t - mid) E(h x).
            for shift in [before, after] {
                let g = &centre * shift.columns(0, q);
                acc += (&g * self.a0 * g.transpose()) * w;
            }
        }
        Ok(acc * half)
    }

    fn adaptive(
        &self,
        a: f64,
        b: f64,
        whole: DMatrix<f64>,
        depth: usize,
        cache: &mut Vec<NodeOffsets>,
    ) -> Result<DMatrix<f64>> {
        let mid = 0.5 * (a + b);
        if cache.len() <= depth {
            cache.push(self.offsets(0.25 * (b - a))?);
        }
        let left = self.panel(a, mid, &cache[depth])?;
        let right = self.panel(mid, b, &cache[depth])?;
        let refined = &left + &right;
        if depth + 1 >= MAX_BISECTION_DEPTH || scaled_change(&refined, &whole) <= QUADRATURE_RTOL {
            return Ok(refined);
        }
        Ok(self.adaptive(a, mid, left, depth + 1, cache)? + self.adaptive(mid, b, right, depth + 1, cache)?)
    }

    fn integrate(&self, a: f64, b: f64) -> Result<DMatrix<f64>> {
        let mut cache = Vec::new();
        let whole = self.panel(a, b, &self.offsets(0.5 * (b - a))?)?;
        self.adaptive(a, b, whole, 0, &mut cache)
    }
}

/// `max_ij |R_ij - W_ij| / sqrt(R_ii R_jj)`. Entries of `C` span many orders
/// of magnitude for small spans (`t` up to `t^{2 kappa + 1}`), so each one is
/// measured against its own scale.
fn scaled_change(refined: &DMatrix<f64>, whole: &DMatrix<f64>) -> f64 {
    let n = refined.nrows();
    let floor = f64::MIN_POSITIVE.max(1e-300 * refined.amax());
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..n {
            let scale = crate::math::sqrt(refined[(i, i)].abs() * refined[(j, j)].abs()).max(floor);
            worst = worst.max((refined[(i, j)] - whole[(i, j)]).abs() / scale);
        }
    }
    worst
}

fn integrate_segments<'a>(
    drift: &DMatrix<f64>,
    segments: impl IntoIterator<Item = (f64, f64, &'a DMatrix<f64>)>,
    t: f64,
) -> Result<DMatrix<f64>> {
    let n = drift.nrows();
    let mut c = DMatrix::zeros(n, n);
    for (a, b, a0) in segments {
        let f = Integrand { drift, a0, t };
        c += f.integrate(a, b)?;
    }
    Ok(linalg::symmetrize(&c))
}

/// The raw matrix `C(t, t0)`, integrated piece by piece between coefficient
/// jumps.
pub fn covariance_matrix(spec: &OperatorSpec, t0: f64, t: f64) -> Result<DMatrix<f64>> {
    if !(t > t0) {
        return Err(Error::NotAfterInitialTime { t0, t });
    }
    integrate_segments(spec.drift(), spec.track().segments(t0, t), t)
}

/// The raw matrix `C0(dt)` of the model operator with `A0 = I_q`.
pub fn model_covariance_matrix(spec: &OperatorSpec, dt: f64) -> Result<DMatrix<f64>> {
    if !(dt > 0.0) {
        return Err(Error::NotAfterInitialTime { t0: 0.0, t: dt });
    }
    let id = DMatrix::identity(spec.q(), spec.q());
    integrate_segments(spec.drift(), [(0.0, dt, &id)], dt)
}

/// `C(t,t0)` together with everything the kernel needs from it.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceBundle {
    t0: f64,
    t: f64,
    c: DMatrix<f64>,
    factor: SpdFactor,
    c_inv: DMatrix<f64>,
    e_fwd: DMatrix<f64>,
    c_prime: DMatrix<f64>,
    trace_drift: f64,
}

impl CovarianceBundle {
    fn assemble(spec: &OperatorSpec, t0: f64, t: f64, c: DMatrix<f64>) -> Result<Self> {
        let factor = SpdFactor::new(&c)?;
        let c_inv = factor.inverse();
        let e_fwd = propagator(spec, t - t0)?;
        let c_prime = linalg::symmetrize(&(e_fwd.transpose() * &c_inv * &e_fwd));
        Ok(Self {
            t0,
            t,
            c,
            factor,
            c_inv,
            e_fwd,
            c_prime,
            trace_drift: spec.trace_drift(),
        })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn span(&self) -> f64 {
        self.t - self.t0
    }

    pub fn dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn factor(&self) -> &SpdFactor {
        &self.factor
    }

    pub fn log_det(&self) -> f64 {
        self.factor.log_det()
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.c_inv
    }

    /// `E(t - t0)`.
    pub fn propagator(&self) -> &DMatrix<f64> {
        &self.e_fwd
    }

    /// `C'(t,t0) = E' C^-1 E`.
    pub fn conjugated_inverse(&self) -> &DMatrix<f64> {
        &self.c_prime
    }

    pub fn trace_drift(&self) -> f64 {
        self.trace_drift
    }

    /// `x - E(t-t0) x0`.
    pub fn offset(&self, x: &DVector<f64>, x0: &DVector<f64>) -> DVector<f64> {
        x - &self.e_fwd * x0
    }

    /// `x - E(t-t0) x0` followed by `r' C^-1 r`.
    pub fn quad_form(&self, x: &DVector<f64>, x0: &DVector<f64>) -> f64 {
        self.factor.quad_form(&self.offset(x, x0))
    }
}

/// `C(t,t0)` with factorization. Errors with `NotAfterInitialTime` for
/// `t <= t0`, and `NotPositiveDefinite` when the drift fails the rank
/// condition (see [`crate::operator::kalman_hypoelliptic`]).
pub fn covariance(spec: &OperatorSpec, t0: f64, t: f64) -> Result<CovarianceBundle> {
    let c = covariance_matrix(spec, t0, t)?;
    CovarianceBundle::assemble(spec, t0, t, c)
}

/// `C0(dt)` of the model operator (`A0 = I_q`) as a bundle with `t0 = 0`.
pub fn model_covariance(spec: &OperatorSpec, dt: f64) -> Result<CovarianceBundle> {
    let c = model_covariance_matrix(spec, dt)?;
    CovarianceBundle::assemble(spec, 0.0, dt, c)
}

/// Result of [`ordering_check`]. Margins are minima over unit vectors `xi`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OrderingReport {
    pub samples: usize,
    /// `min xi'(C2 - C1)xi`; the premise `C1 <= C2` needs this `>= 0`.
    pub premise_margin: f64,
    /// `min xi'(C1^-1 - C2^-1)xi`.
    pub inverse_margin: f64,
    /// `ln det C2 - ln det C1`.
    pub log_det_margin: f64,
    /// Premise held (to `tol`) on every sample.
    pub premise_holds: bool,
    /// Both conclusions held (to `tol`).
    pub conclusion_holds: bool,
}

/// Samples random directions to check that `C1 <= C2` implies
/// `C2^-1 <= C1^-1` and `det C1 <= det C2`. `tol` is a relative slack.
pub fn ordering_check(
    c1: &DMatrix<f64>,
    c2: &DMatrix<f64>,
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<OrderingReport> {
    if c1.shape() != c2.shape() {
        return Err(Error::DimensionMismatch(alloc::format!(
            "{:?} vs {:?}",
            c1.shape(),
            c2.shape()
        )));
    }
    let f1 = SpdFactor::new(c1)?;
    let f2 = SpdFactor::new(c2)?;
    let (i1, i2) = (f1.inverse(), f2.inverse());
    let n = c1.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut premise_margin = f64::INFINITY;
    let mut inverse_margin = f64::INFINITY;
    let mut premise_holds = true;
    let mut inverse_holds = true;
    for _ in 0..samples {
        let mut xi = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        let norm = xi.norm();
        if norm == 0.0 {
            continue;
        }
        xi /= norm;
        let q1 = xi.dot(&(c1 * &xi));
        let q2 = xi.dot(&(c2 * &xi));
        let p1 = xi.dot(&(&i1 * &xi));
        let p2 = xi.dot(&(&i2 * &xi));
        premise_margin = premise_margin.min(q2 - q1);
        inverse_margin = inverse_margin.min(p1 - p2);
        premise_holds &= q1 <= q2 * (1.0 + tol);
        inverse_holds &= p2 <= p1 * (1.0 + tol);
    }
    let log_det_margin = f2.log_det() - f1.log_det();
    Ok(OrderingReport {
        samples,
        premise_margin,
        inverse_margin,
        log_det_margin,
        premise_holds,
        conclusion_holds: inverse_holds && log_det_margin >= -tol,
    })
}

/// `|d/dt ln det C(t,t0) / 2 - (Tr(A(t) C^-1) / 2 - Tr B)|`, with the time
/// derivative taken by a central difference.
pub fn trace_identity_residual(spec: &OperatorSpec, t0: f64, t: f64) -> Result<f64> {
    let h = fd_step(t);
    if !(t - t0 > 2.0 * h) {
        return Err(Error::NotAfterInitialTime { t0, t: t - 2.0 * h });
    }
    check_off_breakpoint(spec, t, h)?;
    let plus = covariance(spec, t0, t + h)?.log_det();
    let minus = covariance(spec, t0, t - h)?.log_det();
    let lhs = (plus - minus) / (2.0 * h) / 2.0;
    let bundle = covariance(spec, t0, t)?;
    let rhs = 0.5 * (spec.diffusion_at(t) * bundle.inverse()).trace() - spec.trace_drift();
    Ok((lhs - rhs).abs())
}

/// `|d/ds ln det C(t,s) / 2 + Tr(A(s) C'(t,s)) / 2|`, differencing in `s`.
pub fn adjoint_trace_identity_residual(spec: &OperatorSpec, s: f64, t: f64) -> Result<f64> {
    let h = fd_step(s);
    if !(t - s > 2.0 * h) {
        return Err(Error::NotAfterInitialTime { t0: s + 2.0 * h, t });
    }
    check_off_breakpoint(spec, s, h)?;
    let plus = covariance(spec, s + h, t)?.log_det();
    let minus = covariance(spec, s - h, t)?.log_det();
    let lhs = (plus - minus) / (2.0 * h) / 2.0;
    let bundle = covariance(spec, s, t)?;
    let rhs = -0.5 * (spec.diffusion_at(s) * bundle.conjugated_inverse()).trace();
    Ok((lhs - rhs).abs())
}

/// Smallest eigenvalue of `C(t, t0)`.
pub fn min_eigenvalue(spec: &OperatorSpec, t0: f64, t: f64) -> Result<f64> {
    let c = covariance_matrix(spec, t0, t)?;
    Ok(linalg::symmetric_eigenvalues(&c)?[0])
}

/// Breakpoint-free sample of times in `(lo, hi)` for the a.e. identities.
pub(crate) fn off_breakpoint_times(spec: &OperatorSpec, lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(count);
    let mut k = 0usize;
    while out.len() < count && k < 100 * count {
        // low-discrepancy (golden ratio) sequence
        let u = (0.5 + k as f64 * 0.618_033_988_749_894_9) % 1.0;
        let t = lo + (hi - lo) * u;
        if check_off_breakpoint(spec, t, fd_step(t)).is_ok() {
            out.push(t);
        }
        k += 1;
    }
    out
}
