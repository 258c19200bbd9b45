//! Small dense linear algebra on top of `nalgebra`: the matrix exponential,
//! Cholesky-type factors with log-determinants, symmetric square roots and a
//! numerical rank.
//!
//! Dimensions here are tiny (N up to ~10), so everything is dense and
//! allocation per call is fine.

use alloc::format;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::{math, Error, Result};

/// Default relative threshold for [`rank_with_tolerance`].
pub const RANK_TOL: f64 = 1e-10;

/// Asymmetry beyond this (relative to the largest entry) is treated as a
/// caller error rather than rounding noise.
const ASYMMETRY_TOL: f64 = 1e-8;

/// Smallest admissible `L_ii^2 / S_ii` ratio in the factorization.
const PIVOT_RATIO: f64 = 64.0 * f64::EPSILON;

pub fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

fn check_square(m: &DMatrix<f64>) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

/// `exp(s * m)` by the lowest diagonal Padé degree (3 to 9) accurate at the
/// norm of `s * m`, else scaling and squaring around degree 13 (Higham 2005). A result with non-finite entries is reported as
/// [`Error::Overflow`].
pub fn mat_exp(m: &DMatrix<f64>, s: f64) -> Result<DMatrix<f64>> {
    check_square(m)?;
    check_finite(m)?;
    if !s.is_finite() {
        return Err(Error::NonFinite);
    }
    let scaled = m * s;
    let norm = scaled.lp_norm(1);
    if s == 0.0 || norm == 0.0 {
        return Ok(DMatrix::identity(m.nrows(), m.nrows()));
    }
    // Anything this large overflows f64 unless the spectrum is very negative;
    // the Padé scaling loop would also run for a long time.
    if norm > 1e6 {
        return Err(Error::Overflow { norm });
    }
    let e = pade_scaled(&scaled, norm)?;
    if e.iter().all(|v| v.is_finite()) {
        Ok(e)
    } else {
        Err(Error::Overflow { norm })
    }
}

const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

/// Low-degree diagonal Padé approximants with the largest 1-norm at which
/// each is accurate to double precision.
const PADE_LOW: [(f64, &[f64]); 4] = [
    (1.495_585_217_958_292e-2, &[120.0, 60.0, 12.0, 1.0]),
    (
        2.539_398_330_063_23e-1,
        &[30_240.0, 15_120.0, 3_360.0, 420.0, 30.0, 1.0],
    ),
    (
        9.504_178_996_162_932e-1,
        &[
            17_297_280.0,
            8_648_640.0,
            1_995_840.0,
            277_200.0,
            25_200.0,
            1_512.0,
            56.0,
            1.0,
        ],
    ),
    (
        2.097_847_961_257_068,
        &[
            17_643_225_600.0,
            8_821_612_800.0,
            2_075_673_600.0,
            302_702_400.0,
            30_270_240.0,
            2_162_160.0,
            110_880.0,
            3_960.0,
            90.0,
            1.0,
        ],
    ),
];

/// Largest 1-norm for which the unscaled Padé-13 approximant is accurate to
/// double precision.
const THETA13: f64 = 5.371_920_351_148_152;

fn pade_solve(u: DMatrix<f64>, v: DMatrix<f64>, norm: f64) -> Result<DMatrix<f64>> {
    (&v - &u).lu().solve(&(&v + &u)).ok_or(Error::Overflow { norm })
}

/// Degree `2k+1` approximant from even powers of `a`.
fn pade_low(a: &DMatrix<f64>, b: &[f64], norm: f64) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let a2 = a * a;
    let mut power = DMatrix::<f64>::identity(n, n);
    let mut u = &power * b[1];
    let mut v = &power * b[0];
    for k in 1..b.len() / 2 {
        power = &power * &a2;
        u += &power * b[2 * k + 1];
        v += &power * b[2 * k];
    }
    pade_solve(a * u, v, norm)
}

fn pade_scaled(a: &DMatrix<f64>, norm: f64) -> Result<DMatrix<f64>> {
    if let Some((_, b)) = PADE_LOW.iter().find(|(theta, _)| norm <= *theta) {
        return pade_low(a, b, norm);
    }
    let n = a.nrows();
    let squarings = libm::ceil(libm::log2(norm / THETA13)).max(0.0) as i32;
    let a = a / libm::ldexp(1.0, squarings);
    let b = &PADE13;
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
    let u = &a * (inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1]);
    let inner_v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
    let v = inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &id * b[0];
    let mut r = pade_solve(u, v, norm)?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    Ok(r)
}

/// `(S + S') / 2`.
pub fn symmetrize(s: &DMatrix<f64>) -> DMatrix<f64> {
    (s + s.transpose()) * 0.5
}

fn checked_symmetric(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_square(s)?;
    check_finite(s)?;
    let scale = s.amax();
    if scale > 0.0 {
        let asym = (s - s.transpose()).amax() / scale;
        if asym > ASYMMETRY_TOL {
            return Err(Error::NotSymmetric(asym));
        }
    }
    Ok(symmetrize(s))
}

/// Lower-triangular factor `L` with `L L' = S` and the log-determinant of `S`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdFactor {
    lower: DMatrix<f64>,
    log_det: f64,
}

impl SpdFactor {
    /// Factors a symmetric positive definite matrix. The input is symmetrized
    /// first.
    pub fn new(s: &DMatrix<f64>) -> Result<Self> {
        let sym = checked_symmetric(s)?;
        let n = sym.nrows();
        let chol = nalgebra::Cholesky::new(sym.clone()).ok_or(Error::NotPositiveDefinite)?;
        let lower = chol.unpack();
        let mut log_det = 0.0;
        for i in 0..n {
            let d = lower[(i, i)];
            if !(d > 0.0) || d * d <= PIVOT_RATIO * sym[(i, i)] {
                return Err(Error::NotPositiveDefinite);
            }
            log_det += 2.0 * math::ln(d);
        }
        Ok(Self { lower, log_det })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// `L^-1 r`.
    pub fn whiten(&self, r: &DVector<f64>) -> DVector<f64> {
        self.lower
            .solve_lower_triangular(r)
            .expect("factor has a strictly positive diagonal")
    }

    /// `r' S^-1 r`.
    pub fn quad_form(&self, r: &DVector<f64>) -> f64 {
        self.whiten(r).norm_squared()
    }

    /// `S^-1 r`.
    pub fn solve(&self, r: &DVector<f64>) -> DVector<f64> {
        let w = self.whiten(r);
        self.lower
            .tr_solve_lower_triangular(&w)
            .expect("factor has a strictly positive diagonal")
    }

    /// `S^-1`, exactly symmetric.
    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.dim();
        let linv = self
            .lower
            .solve_lower_triangular(&DMatrix::identity(n, n))
            .expect("factor has a strictly positive diagonal");
        symmetrize(&(linv.transpose() * linv))
    }

    /// `L L'`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.lower * self.lower.transpose()
    }
}

/// Convenience wrapper matching the factor constructor.
pub fn spd_factor(s: &DMatrix<f64>) -> Result<SpdFactor> {
    SpdFactor::new(s)
}

/// Symmetric positive square root through the eigendecomposition.
pub fn spd_sqrt(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = checked_symmetric(s)?;
    let eig = SymmetricEigen::new(sym);
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::NotPositiveDefinite);
    }
    let roots = DMatrix::from_diagonal(&eig.eigenvalues.map(math::sqrt));
    let r = &eig.eigenvectors * roots * eig.eigenvectors.transpose();
    Ok(symmetrize(&r))
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(s: &DMatrix<f64>) -> Result<DVector<f64>> {
    let sym = checked_symmetric(s)?;
    let mut ev: alloc::vec::Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(DVector::from_vec(ev))
}

/// Number of singular values above `tol_rel` times the largest one.
pub fn rank_with_tolerance(m: &DMatrix<f64>, tol_rel: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let largest = sv.max();
    if !(largest > 0.0) {
        return 0;
    }
    sv.iter().filter(|&&v| v > tol_rel * largest).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Plain Taylor series with scaling and squaring; only used as an
    /// independent check.
    fn exp_series(m: &DMatrix<f64>) -> DMatrix<f64> {
        let n = m.nrows();
        let mut squarings = 0;
        let mut a = m.clone();
        while a.lp_norm(1) > 0.5 {
            a /= 2.0;
            squarings += 1;
        }
        let mut term = DMatrix::identity(n, n);
        let mut sum = term.clone();
        for k in 1..40 {
            term = &term * &a / k as f64;
            sum += &term;
        }
        for _ in 0..squarings {
            sum = &sum * &sum;
        }
        sum
    }

    fn max_rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).amax() / b.amax().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let e = mat_exp(&DMatrix::zeros(2, 2), 7.0).unwrap();
        assert_eq!(e, DMatrix::identity(2, 2));
    }

    #[test]
    fn exp_of_nilpotent_shear() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, -1.0, 0.0]);
        for &t in &[0.1, 1.0, 3.5] {
            let e = mat_exp(&m, t).unwrap();
            let expected = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -t, 1.0]);
            assert!(max_rel(&e, &expected) < 1e-14, "t = {t}");
        }
    }

    #[test]
    fn exp_of_scalar() {
        let e = mat_exp(&DMatrix::from_element(1, 1, -1.0), 2.0).unwrap();
        // series oracle for e^-2
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..60 {
            sum += term;
            term *= -2.0 / k as f64;
        }
        assert_relative_eq!(e[(0, 0)], sum, max_relative = 1e-13);
        assert_relative_eq!(e[(0, 0)], 0.135_335_283_236_612_7, max_relative = 1e-14);
    }

    #[test]
    fn exp_overflow_is_an_error() {
        let m = DMatrix::from_element(1, 1, 1.0);
        assert!(matches!(mat_exp(&m, 1000.0), Err(Error::Overflow { .. })));
        let bad = DMatrix::from_element(1, 1, f64::NAN);
        assert_eq!(mat_exp(&bad, 1.0), Err(Error::NonFinite));
    }

    #[test]
    fn every_pade_degree_is_accurate_at_its_threshold() {
        let m = DMatrix::from_row_slice(3, 3, &[-0.4, 0.3, 0.1, 0.2, 0.5, -0.3, 0.1, -0.2, 0.2]);
        let norm = m.lp_norm(1);
        // Squaring (last entry) amplifies rounding in both routes.
        let cases = PADE_LOW
            .iter()
            .map(|(t, _)| (*t, 1e-14))
            .chain([(THETA13, 1e-14), (3.0 * THETA13, 1e-13)]);
        for (theta, tol) in cases {
            for s in [0.5 * theta / norm, 0.999 * theta / norm] {
                let got = mat_exp(&m, s).unwrap();
                let want = exp_series(&(&m * s));
                let err = (got - &want).amax() / want.amax();
                assert!(err <= tol, "s = {s}, err = {err:e}");
            }
        }
    }

    #[test]
    fn factor_of_identity_and_scalar() {
        let f = SpdFactor::new(&DMatrix::identity(2, 2)).unwrap();
        assert_eq!(f.lower(), &DMatrix::identity(2, 2));
        assert_eq!(f.log_det(), 0.0);
        let f = SpdFactor::new(&DMatrix::from_element(1, 1, 4.0)).unwrap();
        assert_relative_eq!(f.lower()[(0, 0)], 2.0);
        assert_relative_eq!(f.log_det(), 4f64.ln(), max_relative = 1e-15);
    }

    #[test]
    fn factor_of_kolmogorov_covariance() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, -0.5, -0.5, 1.0 / 3.0]);
        let f = SpdFactor::new(&c).unwrap();
        assert_relative_eq!(f.log_det(), (1.0f64 / 12.0).ln(), max_relative = 1e-14);
        assert!(max_rel(&f.reconstruct(), &c) < 1e-15);
        let inv = f.inverse();
        assert!(max_rel(&(&c * &inv), &DMatrix::identity(2, 2)) < 1e-14);
    }

    #[test]
    fn factor_rejects_indefinite_and_singular() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert_eq!(SpdFactor::new(&c), Err(Error::NotPositiveDefinite));
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(SpdFactor::new(&c), Err(Error::NotPositiveDefinite));
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(SpdFactor::new(&c), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn sqrt_examples() {
        let r = spd_sqrt(&DMatrix::identity(3, 3)).unwrap();
        assert!(max_rel(&r, &DMatrix::identity(3, 3)) < 1e-15);
        let d = DMatrix::from_diagonal(&DVector::from_vec(alloc::vec![4.0, 9.0]));
        let r = spd_sqrt(&d).unwrap();
        assert_relative_eq!(r[(0, 0)], 2.0, max_relative = 1e-15);
        assert_relative_eq!(r[(1, 1)], 3.0, max_relative = 1e-15);
        assert_eq!(r[(0, 1)], 0.0);
        let c = DMatrix::from_row_slice(2, 2, &[1.0, -0.5, -0.5, 1.0 / 3.0]);
        let r = spd_sqrt(&c).unwrap();
        assert!(max_rel(&(&r * &r), &c) < 1e-10);
        assert_eq!(spd_sqrt(&DMatrix::zeros(2, 2)), Err(Error::NotPositiveDefinite));
    }

    #[test]
    fn rank_examples() {
        assert_eq!(rank_with_tolerance(&DMatrix::identity(2, 2), RANK_TOL), 2);
        assert_eq!(rank_with_tolerance(&DMatrix::zeros(3, 2), RANK_TOL), 0);
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert_eq!(rank_with_tolerance(&m, RANK_TOL), 1);
    }

    fn small_matrix(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
        proptest::collection::vec(-1.0f64..1.0, n * n)
            .prop_map(move |v| DMatrix::from_row_slice(n, n, &v))
            .prop_map(|m| {
                // rescale to norm <= 5
                let norm = m.lp_norm(1).max(1e-3);
                let target = 5.0f64.min(norm);
                m * (target / norm)
            })
    }

    fn spd_matrix(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
        proptest::collection::vec(-1.0f64..1.0, n * n).prop_map(move |v| {
            let g = DMatrix::from_row_slice(n, n, &v);
            &g * g.transpose() + DMatrix::identity(n, n) * 0.1
        })
    }

    proptest! {
        #[test]
        fn exp_matches_series(m in (1usize..5).prop_flat_map(small_matrix), s in -1.0f64..1.0) {
            let e = mat_exp(&m, s).unwrap();
            prop_assert!(max_rel(&e, &exp_series(&(&m * s))) < 1e-12);
        }

        #[test]
        fn exp_inverse_and_semigroup(m in (1usize..5).prop_flat_map(small_matrix),
                                      s in -1.0f64..1.0, u in -1.0f64..1.0) {
            let n = m.nrows();
            let es = mat_exp(&m, s).unwrap();
            let prod = &es * mat_exp(&m, -s).unwrap();
            prop_assert!((prod - DMatrix::identity(n, n)).amax() < 1e-10);
            let lhs = mat_exp(&m, s + u).unwrap();
            let rhs = &es * mat_exp(&m, u).unwrap();
            prop_assert!(max_rel(&lhs, &rhs) < 1e-10);
        }

        #[test]
        fn exp_determinant_is_exp_trace(m in (1usize..5).prop_flat_map(small_matrix), s in -1.0f64..1.0) {
            let det = mat_exp(&m, s).unwrap().determinant();
            let expected = (s * m.trace()).exp();
            prop_assert!((det - expected).abs() <= 1e-10 * expected);
        }

        #[test]
        fn factor_round_trip(s in (1usize..6).prop_flat_map(spd_matrix)) {
            let f = SpdFactor::new(&s).unwrap();
            let back = f.reconstruct();
            for (a, b) in back.iter().zip(s.iter()) {
                prop_assert!((a - b).abs() <= 1e-12 * s.amax());
            }
            prop_assert!((f.log_det() - s.determinant().ln()).abs() < 1e-10);
        }

        #[test]
        fn sqrt_squares_back(s in (1usize..6).prop_flat_map(spd_matrix)) {
            let r = spd_sqrt(&s).unwrap();
            prop_assert!(max_rel(&(&r * &r), &s) < 1e-10);
        }
    }
}
