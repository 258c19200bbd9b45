//! The reference operators used throughout the tests and the verification
//! suites.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::operator::{CoefficientTrack, OperatorSpec};

fn build(drift: DMatrix<f64>, blocks: &[usize], track: CoefficientTrack) -> OperatorSpec {
    OperatorSpec::new(drift, blocks, track, None).expect("fixture is valid")
}

/// `u_xx - u_t`.
pub fn heat() -> OperatorSpec {
    build(DMatrix::zeros(1, 1), &[1], CoefficientTrack::scalar(1, 1.0).unwrap())
}

/// Two-dimensional heat operator (`B = 0`, `q = N = 2`).
pub fn heat2() -> OperatorSpec {
    build(DMatrix::zeros(2, 2), &[2], CoefficientTrack::scalar(2, 1.0).unwrap())
}

/// `u_xx + x u_x - u_t` (`B = [[1]]`, so `Tr B = 1`).
pub fn ornstein_uhlenbeck() -> OperatorSpec {
    build(
        DMatrix::from_element(1, 1, 1.0),
        &[1],
        CoefficientTrack::scalar(1, 1.0).unwrap(),
    )
}

fn kolmogorov_drift() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0])
}

/// `a u_{x1 x1} + x1 u_{x2} - u_t` with constant `a`.
pub fn kolmogorov_with(a: f64) -> OperatorSpec {
    build(kolmogorov_drift(), &[1, 1], CoefficientTrack::scalar(1, a).unwrap())
}

/// `u_{x1 x1} + x1 u_{x2} - u_t`.
pub fn kolmogorov() -> OperatorSpec {
    kolmogorov_with(1.0)
}

/// Period of the alternating coefficient in [`kolmogorov_piecewise`].
pub const PIECE_LENGTH: f64 = 0.5;
/// Number of pieces in [`kolmogorov_piecewise`] starting at `t = 0`.
pub const PIECE_COUNT: usize = 24;

/// Kolmogorov operator with `a(t)` alternating between 2 and 1/2 every
/// [`PIECE_LENGTH`] starting at `t = 0` (so `nu = 1/2`).
pub fn kolmogorov_piecewise() -> OperatorSpec {
    let breakpoints: Vec<f64> = (0..PIECE_COUNT).map(|i| i as f64 * PIECE_LENGTH).collect();
    let pieces = (0..PIECE_COUNT)
        .map(|i| DMatrix::from_element(1, 1, if i % 2 == 0 { 2.0 } else { 0.5 }))
        .collect();
    build(
        kolmogorov_drift(),
        &[1, 1],
        CoefficientTrack::new(breakpoints, pieces).unwrap(),
    )
}

/// Three-step chain `m = (1, 1, 1)` with unit subdiagonal (`kappa = 2`,
/// `Q = 9`).
pub fn chain3() -> OperatorSpec {
    let b = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    build(b, &[1, 1, 1], CoefficientTrack::scalar(1, 1.0).unwrap())
}

/// Every fixture with its name.
pub fn all() -> Vec<(&'static str, OperatorSpec)> {
    alloc::vec![
        ("heat", heat()),
        ("heat2", heat2()),
        ("ornstein-uhlenbeck", ornstein_uhlenbeck()),
        ("kolmogorov", kolmogorov()),
        ("kolmogorov-piecewise", kolmogorov_piecewise()),
        ("chain3", chain3()),
    ]
}
