//! Explicit fundamental solutions for degenerate Kolmogorov-Fokker-Planck
//! operators
//!
//! ```text
//! L u = sum_{i,j<=q} a_ij(t) d2u/dx_i dx_j + sum_{j,k<=N} b_jk x_k du/dx_j - du/dt
//! ```
//!
//! with a piecewise-constant (hence merely measurable) symmetric diffusion
//! track `A0(t)` and a constant drift matrix `B` in hypoelliptic block
//! form. The crate computes the Gaussian kernel
//!
//! ```text
//! Gamma(x,t; x0,t0) = exp(-(1/4) r' C^-1 r - (t-t0) Tr B) / ((4 pi)^{N/2} sqrt(det C)),
//! r = x - E(t-t0) x0,   E(s) = exp(-s B),
//! C(t,t0) = int_{t0}^{t} E(t-s) A(s) E(t-s)' ds
//! ```
//!
//! its derivatives, the model kernels used for two-sided comparison, the
//! solution of the Cauchy problem by Gauss-Hermite quadrature, and a
//! verification engine that certifies the identities the kernel satisfies.
//!
//! The crate is `no_std` (it needs `alloc`). All transcendental functions go
//! through `libm`, so results are bit-identical across platforms.

#![no_std]
// `!(x > 0.0)` is how inputs reject NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod cauchy;
pub mod covariance;
mod error;
pub mod fixtures;
pub mod kernel;
pub mod linalg;
pub(crate) mod math;
pub mod operator;
pub mod quadrature;
pub mod verify;

pub use error::{Error, Result};

pub use nalgebra::{DMatrix, DVector};
