//! Gaussian quadrature rules.
//!
//! Nodes start from Golub-Welsch (eigenvalues of the Jacobi matrix), are
//! polished by Newton on the three-term recurrence, and the weights come from
//! the Christoffel sum of orthonormal polynomials, which keeps the tiny tail
//! weights relatively accurate.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::{math, Error, Result};

/// A one-dimensional rule `int w(x) f(x) dx ~ sum_i weights[i] f(nodes[i])`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

fn jacobi_eigenvalues(off_diag: impl Fn(usize) -> f64, n: usize) -> Vec<f64> {
    let mut j = DMatrix::zeros(n, n);
    for k in 1..n {
        let b = off_diag(k);
        j[(k - 1, k)] = b;
        j[(k, k - 1)] = b;
    }
    let mut ev: Vec<f64> = j.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Orthonormal Hermite polynomials (weight `e^{-x^2}`): returns
/// `(sum_{k<n} p_k(x)^2, p_n(x), p_n'(x))`.
fn hermite_eval(n: usize, x: f64) -> (f64, f64, f64) {
    let mut p_prev = 0.0;
    let mut p = math::powf(math::PI, -0.25);
    let mut sum_sq = 0.0;
    for k in 0..n {
        sum_sq += p * p;
        let kf = k as f64;
        let next = math::sqrt(2.0 / (kf + 1.0)) * x * p - math::sqrt(kf / (kf + 1.0)) * p_prev;
        p_prev = p;
        p = next;
    }
    // p_n' = sqrt(2n) p_{n-1}
    (sum_sq, p, math::sqrt(2.0 * n as f64) * p_prev)
}

/// Gauss-Hermite rule for the weight `e^{-x^2}` on the real line.
pub fn gauss_hermite(n: usize) -> Rule {
    assert!(n > 0, "rule needs at least one node");
    let mut nodes = jacobi_eigenvalues(|k| math::sqrt(k as f64 / 2.0), n);
    let mut weights = vec![0.0; n];
    for (x, w) in nodes.iter_mut().zip(weights.iter_mut()) {
        for _ in 0..3 {
            let (_, p, dp) = hermite_eval(n, *x);
            if dp == 0.0 {
                break;
            }
            *x -= p / dp;
        }
        *w = 1.0 / hermite_eval(n, *x).0;
    }
    symmetrize_rule(&mut nodes, &mut weights);
    Rule { nodes, weights }
}

/// Orthonormal Legendre polynomials on [-1, 1]: same triple as
/// [`hermite_eval`].
fn legendre_eval(n: usize, x: f64) -> (f64, f64, f64) {
    let mut p_prev = 0.0;
    let mut p = math::sqrt(0.5);
    let mut sum_sq = 0.0;
    let coef = |k: f64| (k + 1.0) / math::sqrt((2.0 * k + 1.0) * (2.0 * k + 3.0));
    for k in 0..n {
        sum_sq += p * p;
        let kf = k as f64;
        let prev_coef = if k == 0 { 0.0 } else { coef(kf - 1.0) };
        let next = (x * p - prev_coef * p_prev) / coef(kf);
        p_prev = p;
        p = next;
    }
    // (1 - x^2) p_n' = n sqrt((2n+1)/(2n-1)) p_{n-1} - n x p_n
    let nf = n as f64;
    let dp = (nf * math::sqrt((2.0 * nf + 1.0) / (2.0 * nf - 1.0)) * p_prev - nf * x * p) / (1.0 - x * x);
    (sum_sq, p, dp)
}

/// Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> Rule {
    assert!(n > 0, "rule needs at least one node");
    let mut nodes = jacobi_eigenvalues(|k| k as f64 / math::sqrt(4.0 * (k * k) as f64 - 1.0), n);
    let mut weights = vec![0.0; n];
    for (x, w) in nodes.iter_mut().zip(weights.iter_mut()) {
        for _ in 0..3 {
            let (_, p, dp) = legendre_eval(n, *x);
            if dp == 0.0 || !dp.is_finite() {
                break;
            }
            *x -= p / dp;
        }
        *w = 1.0 / legendre_eval(n, *x).0;
    }
    symmetrize_rule(&mut nodes, &mut weights);
    Rule { nodes, weights }
}

/// Both rules are symmetric about 0; enforce it exactly so odd moments vanish
/// to rounding.
fn symmetrize_rule(nodes: &mut [f64], weights: &mut [f64]) {
    let n = nodes.len();
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (nodes[j] - nodes[i]);
        let w = 0.5 * (weights[i] + weights[j]);
        nodes[i] = -x;
        nodes[j] = x;
        weights[i] = w;
        weights[j] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
}

/// Largest dimension for which tensor Gauss-Hermite is attempted.
pub const MAX_TENSOR_DIM: usize = 3;

/// Tensor-product rule in `dim` dimensions, visited node by node.
///
/// Calls `f(z, w)` with the multi-dimensional node and the product weight.
pub fn for_each_tensor_node(rule: &Rule, dim: usize, mut f: impl FnMut(&[f64], f64)) -> Result<()> {
    if dim > MAX_TENSOR_DIM {
        return Err(Error::UnsupportedDimension(dim));
    }
    let n = rule.len();
    let mut idx = vec![0usize; dim];
    let mut z = vec![0.0; dim];
    loop {
        let mut w = 1.0;
        for (k, &i) in idx.iter().enumerate() {
            z[k] = rule.nodes[i];
            w *= rule.weights[i];
        }
        f(&z, w);
        // odometer, last index fastest
        let mut k = dim;
        loop {
            if k == 0 {
                return Ok(());
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < n {
                break;
            }
            idx[k] = 0;
        }
    }
}
