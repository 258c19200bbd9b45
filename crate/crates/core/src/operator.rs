//! The problem model: drift matrix in block form, the piecewise-constant
//! diffusion track, ellipticity, and the dilation exponents.

use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::linalg::{self, RANK_TOL};
use crate::{Error, Result};

/// Entries of the forbidden blocks of `B` must not exceed this.
pub const FORBIDDEN_BLOCK_TOL: f64 = 1e-14;

/// Block partition `m_0 >= m_1 >= ... >= m_kappa` of `B`, with the dilation
/// exponents and the homogeneous dimension.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BlockStructure {
    blocks: Vec<usize>,
    sigma: Vec<u32>,
    homogeneous_dim: u32,
}

impl BlockStructure {
    fn from_blocks(blocks: &[usize]) -> Self {
        let sigma: Vec<u32> = blocks
            .iter()
            .enumerate()
            .flat_map(|(j, &m)| core::iter::repeat_n(2 * j as u32 + 1, m))
            .collect();
        let homogeneous_dim = sigma.iter().sum();
        Self {
            blocks: blocks.to_vec(),
            sigma,
            homogeneous_dim,
        }
    }

    pub fn blocks(&self) -> &[usize] {
        &self.blocks
    }

    pub fn kappa(&self) -> usize {
        self.blocks.len() - 1
    }

    /// Exponent `2j + 1` of every coordinate in block `j`.
    pub fn sigma(&self) -> &[u32] {
        &self.sigma
    }

    /// `Q = sum sigma_i`.
    pub fn homogeneous_dim(&self) -> u32 {
        self.homogeneous_dim
    }

    pub fn dim(&self) -> usize {
        self.sigma.len()
    }
}

fn check_blocks(n: usize, blocks: &[usize]) -> Result<()> {
    if blocks.is_empty() {
        return Err(Error::BadBlockShape("no blocks given".to_string()));
    }
    if blocks.contains(&0) {
        return Err(Error::BadBlockShape("block sizes must be positive".to_string()));
    }
    if blocks.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::BadBlockShape(format!(
            "block sizes {blocks:?} must be nonincreasing"
        )));
    }
    let total: usize = blocks.iter().sum();
    if total != n {
        return Err(Error::BadBlockShape(format!(
            "block sizes sum to {total}, matrix dimension is {n}"
        )));
    }
    Ok(())
}

/// Checks that `b` has the hypoelliptic block pattern for partition `blocks`:
/// zero below the first block subdiagonal and full-rank subdiagonal blocks.
pub fn validate_structure(b: &DMatrix<f64>, blocks: &[usize]) -> Result<BlockStructure> {
    if !b.is_square() {
        return Err(Error::BadBlockShape(format!(
            "drift must be square, got {}x{}",
            b.nrows(),
            b.ncols()
        )));
    }
    linalg::check_finite(b)?;
    check_blocks(b.nrows(), blocks)?;

    let offsets: Vec<usize> = blocks
        .iter()
        .scan(0, |acc, &m| {
            let start = *acc;
            *acc += m;
            Some(start)
        })
        .collect();

    for (row, (&r0, &rm)) in offsets.iter().zip(blocks).enumerate() {
        for col in 0..row.saturating_sub(1) {
            let view = b.view((r0, offsets[col]), (rm, blocks[col]));
            let max_abs = view.amax();
            if max_abs > FORBIDDEN_BLOCK_TOL {
                return Err(Error::NonZeroForbiddenBlock { row, col, max_abs });
            }
        }
        if row > 0 {
            let sub = b.view((r0, offsets[row - 1]), (rm, blocks[row - 1])).clone_owned();
            let found = linalg::rank_with_tolerance(&sub, RANK_TOL);
            if found != rm {
                return Err(Error::RankDeficientBlock {
                    j: row,
                    expected: rm,
                    found,
                });
            }
        }
    }
    Ok(BlockStructure::from_blocks(blocks))
}

/// Kalman rank condition: `rank [J, BJ, ..., B^{N-1} J] = N` with `J` the
/// first `q` columns of the identity.
pub fn kalman_hypoelliptic(b: &DMatrix<f64>, q: usize) -> bool {
    let n = b.nrows();
    if !b.is_square() || q == 0 || q > n {
        return false;
    }
    let mut ctrb = DMatrix::zeros(n, n * q);
    let mut block = DMatrix::identity(n, n).columns(0, q).clone_owned();
    for k in 0..n {
        ctrb.columns_mut(k * q, q).copy_from(&block);
        block = b * block;
    }
    linalg::rank_with_tolerance(&ctrb, RANK_TOL) == n
}

/// Piecewise-constant symmetric `q x q` diffusion coefficients.
///
/// `pieces[i]` holds on `[breakpoints[i], breakpoints[i+1])`; the first piece
/// also covers everything before `breakpoints[0]` and the last one everything
/// after the final breakpoint. Values at breakpoints are right-continuous.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTrack {
    q: usize,
    breakpoints: Vec<f64>,
    pieces: Vec<DMatrix<f64>>,
}

impl CoefficientTrack {
    pub fn new(breakpoints: Vec<f64>, pieces: Vec<DMatrix<f64>>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::BadTrack("at least one piece is required".to_string()));
        }
        if breakpoints.len() != pieces.len() {
            return Err(Error::BadTrack(format!(
                "{} breakpoints for {} pieces; each piece needs its start time",
                breakpoints.len(),
                pieces.len()
            )));
        }
        if breakpoints.iter().any(|t| !t.is_finite()) {
            return Err(Error::BadTrack("breakpoints must be finite".to_string()));
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::BadTrack("breakpoints must be strictly increasing".to_string()));
        }
        let q = pieces[0].nrows();
        let mut sym = Vec::with_capacity(pieces.len());
        for p in &pieces {
            if p.nrows() != q || p.ncols() != q {
                return Err(Error::BadTrack(format!(
                    "every piece must be {q}x{q}, found {}x{}",
                    p.nrows(),
                    p.ncols()
                )));
            }
            linalg::check_finite(p)?;
            let scale = p.amax().max(f64::MIN_POSITIVE);
            if (p - p.transpose()).amax() > 1e-12 * scale {
                return Err(Error::BadTrack("pieces must be symmetric".to_string()));
            }
            sym.push(linalg::symmetrize(p));
        }
        Ok(Self {
            q,
            breakpoints,
            pieces: sym,
        })
    }

    /// A single piece valid for all times.
    pub fn constant(a: DMatrix<f64>) -> Result<Self> {
        Self::new(alloc::vec![0.0], alloc::vec![a])
    }

    /// `alpha * I_q` for all times.
    pub fn scalar(q: usize, alpha: f64) -> Result<Self> {
        Self::constant(DMatrix::identity(q, q) * alpha)
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn pieces(&self) -> &[DMatrix<f64>] {
        &self.pieces
    }

    /// Times where the coefficients may jump (every breakpoint but the
    /// first, which only starts the first piece).
    pub fn jumps(&self) -> &[f64] {
        &self.breakpoints[1..]
    }

    /// Index of the piece in force at `t`.
    pub fn piece_index(&self, t: f64) -> usize {
        // number of breakpoints <= t, minus one, clamped to the first piece
        self.breakpoints.partition_point(|&b| b <= t).saturating_sub(1)
    }

    pub fn coefficient_at(&self, t: f64) -> &DMatrix<f64> {
        &self.pieces[self.piece_index(t)]
    }

    /// Splits `[t0, t]` at the jumps, yielding `(start, end, piece)`.
    pub fn segments(&self, t0: f64, t: f64) -> Vec<(f64, f64, &DMatrix<f64>)> {
        let mut out = Vec::new();
        let mut start = t0;
        for &b in self.jumps() {
            if b <= start {
                continue;
            }
            if b >= t {
                break;
            }
            out.push((start, b, self.coefficient_at(start)));
            start = b;
        }
        out.push((start, t, self.coefficient_at(start)));
        out
    }

    /// Distance from `t` to the closest jump, with that jump.
    pub fn nearest_jump(&self, t: f64) -> Option<(f64, f64)> {
        self.jumps()
            .iter()
            .map(|&b| ((t - b).abs(), b))
            .min_by(|a, b| a.0.total_cmp(&b.0))
    }
}

/// Largest `nu <= 1` with `nu <= lambda_min` and `lambda_max <= 1/nu` over
/// all pieces.
pub fn nu_of(track: &CoefficientTrack) -> Result<f64> {
    let mut nu: f64 = 1.0;
    for (index, p) in track.pieces().iter().enumerate() {
        let ev = linalg::symmetric_eigenvalues(p)?;
        let min_eig = ev[0];
        let max_eig = ev[ev.len() - 1];
        if !(min_eig > 0.0) {
            return Err(Error::NonPositivePiece { index, min_eig });
        }
        nu = nu.min(min_eig).min(1.0 / max_eig);
    }
    Ok(nu)
}

/// Full problem description: `N`, the drift `B`, its block structure, the
/// diffusion track and the ellipticity constant.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSpec {
    drift: DMatrix<f64>,
    structure: BlockStructure,
    track: CoefficientTrack,
    nu: f64,
}

impl OperatorSpec {
    /// Validates the block structure of `drift` and the track. `nu` defaults
    /// to [`nu_of`]; a declared value must not exceed it.
    pub fn new(drift: DMatrix<f64>, blocks: &[usize], track: CoefficientTrack, nu: Option<f64>) -> Result<Self> {
        let structure = validate_structure(&drift, blocks)?;
        if track.q() != blocks[0] {
            return Err(Error::DimensionMismatch(format!(
                "coefficient pieces are {0}x{0} but the first block has size {1}",
                track.q(),
                blocks[0]
            )));
        }
        let admissible = nu_of(&track)?;
        let nu = match nu {
            None => admissible,
            Some(v) if v > 0.0 && v <= admissible * (1.0 + 1e-12) => v,
            Some(v) => {
                return Err(Error::BadEllipticity {
                    declared: v,
                    admissible,
                })
            }
        };
        Ok(Self {
            drift,
            structure,
            track,
            nu,
        })
    }

    pub fn dim(&self) -> usize {
        self.drift.nrows()
    }

    pub fn q(&self) -> usize {
        self.track.q()
    }

    pub fn drift(&self) -> &DMatrix<f64> {
        &self.drift
    }

    pub fn trace_drift(&self) -> f64 {
        self.drift.trace()
    }

    pub fn structure(&self) -> &BlockStructure {
        &self.structure
    }

    pub fn track(&self) -> &CoefficientTrack {
        &self.track
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// `A0(t)` embedded top-left in an `N x N` zero matrix.
    pub fn diffusion_at(&self, t: f64) -> DMatrix<f64> {
        embed(self.track.coefficient_at(t), self.dim())
    }

    /// Same operator with the track replaced by `alpha * I_q` (the model
    /// operator `L_alpha`).
    pub fn model(&self, alpha: f64) -> Result<Self> {
        let track = CoefficientTrack::scalar(self.q(), alpha)?;
        Self::new(self.drift.clone(), self.structure.blocks(), track, None)
    }
}

pub(crate) fn embed(a0: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n, n);
    a.view_mut((0, 0), (a0.nrows(), a0.ncols())).copy_from(a0);
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn m(rows: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, v.len() / rows, v)
    }

    #[test]
    fn kolmogorov_structure() {
        let s = validate_structure(&m(2, &[0.0, 0.0, 1.0, 0.0]), &[1, 1]).unwrap();
        assert_eq!(s.kappa(), 1);
        assert_eq!(s.sigma(), &[1, 3]);
        assert_eq!(s.homogeneous_dim(), 4);
    }

    #[test]
    fn nondegenerate_structure() {
        let s = validate_structure(&DMatrix::zeros(3, 3), &[3]).unwrap();
        assert_eq!(s.kappa(), 0);
        assert_eq!(s.sigma(), &[1, 1, 1]);
        assert_eq!(s.homogeneous_dim(), 3);
    }

    #[test]
    fn rank_deficient_subdiagonal_block() {
        let err = validate_structure(&DMatrix::zeros(2, 2), &[1, 1]).unwrap_err();
        assert_eq!(
            err,
            Error::RankDeficientBlock {
                j: 1,
                expected: 1,
                found: 0
            }
        );
    }

    #[test]
    fn forbidden_block_and_shapes() {
        let b = m(3, &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.5, 1.0, 0.0]);
        assert!(matches!(
            validate_structure(&b, &[1, 1, 1]),
            Err(Error::NonZeroForbiddenBlock { row: 2, col: 0, .. })
        ));
        assert!(matches!(validate_structure(&b, &[1, 2]), Err(Error::BadBlockShape(_))));
        assert!(matches!(validate_structure(&b, &[2, 2]), Err(Error::BadBlockShape(_))));
        // arbitrary "*" blocks are fine
        let b = m(3, &[3.0, -1.0, 2.0, 1.0, 7.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(validate_structure(&b, &[1, 1, 1]).unwrap().homogeneous_dim(), 9);
    }

    #[test]
    fn wide_blocks() {
        // m = (2, 1): B_1 is 1x2 and must have rank 1
        let b = m(3, &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let s = validate_structure(&b, &[2, 1]).unwrap();
        assert_eq!(s.sigma(), &[1, 1, 3]);
        assert!(kalman_hypoelliptic(&b, 2));
    }

    #[test]
    fn kalman_examples() {
        assert!(kalman_hypoelliptic(&m(2, &[0.0, 0.0, 1.0, 0.0]), 1));
        assert!(kalman_hypoelliptic(&DMatrix::zeros(3, 3), 3));
        assert!(!kalman_hypoelliptic(&DMatrix::zeros(2, 2), 1));
    }

    #[test]
    fn coefficient_lookup() {
        let track = CoefficientTrack::scalar(1, 1.0).unwrap();
        for t in [-5.0, 0.0, 3.0] {
            assert_eq!(track.coefficient_at(t)[(0, 0)], 1.0);
        }
        let track = CoefficientTrack::new(vec![0.0, 1.0], vec![m(1, &[2.0]), m(1, &[0.5])]).unwrap();
        assert_eq!(track.coefficient_at(0.5)[(0, 0)], 2.0);
        assert_eq!(track.coefficient_at(1.0)[(0, 0)], 0.5);
        assert_eq!(track.coefficient_at(-1.0)[(0, 0)], 2.0);
        assert_eq!(track.coefficient_at(9.0)[(0, 0)], 0.5);
    }

    #[test]
    fn segments_split_at_jumps() {
        let track = CoefficientTrack::new(vec![0.0, 1.0, 2.0], vec![m(1, &[2.0]), m(1, &[0.5]), m(1, &[1.0])]).unwrap();
        let segs = track.segments(-0.5, 2.5);
        let ends: Vec<(f64, f64, f64)> = segs.iter().map(|s| (s.0, s.1, s.2[(0, 0)])).collect();
        assert_eq!(ends, vec![(-0.5, 1.0, 2.0), (1.0, 2.0, 0.5), (2.0, 2.5, 1.0)]);
        let segs = track.segments(1.2, 1.7);
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].2[(0, 0)], 0.5);
    }

    #[test]
    fn nu_examples() {
        assert_eq!(nu_of(&CoefficientTrack::scalar(1, 1.0).unwrap()).unwrap(), 1.0);
        let t = CoefficientTrack::new(vec![0.0, 1.0], vec![m(1, &[0.5]), m(1, &[2.0])]).unwrap();
        assert_eq!(nu_of(&t).unwrap(), 0.5);
        let t = CoefficientTrack::new(vec![0.0, 1.0], vec![m(1, &[0.4]), m(1, &[2.0])]).unwrap();
        assert!((nu_of(&t).unwrap() - 0.4).abs() < 1e-15);
        let t = CoefficientTrack::constant(m(2, &[1.0, 0.0, 0.0, -1.0])).unwrap();
        assert!(matches!(nu_of(&t), Err(Error::NonPositivePiece { index: 0, .. })));
    }

    #[test]
    fn declared_nu_must_be_admissible() {
        let track = CoefficientTrack::scalar(1, 2.0).unwrap();
        let b = DMatrix::zeros(1, 1);
        assert_eq!(
            OperatorSpec::new(b.clone(), &[1], track.clone(), None).unwrap().nu(),
            0.5
        );
        assert_eq!(
            OperatorSpec::new(b.clone(), &[1], track.clone(), Some(0.25))
                .unwrap()
                .nu(),
            0.25
        );
        assert!(matches!(
            OperatorSpec::new(b, &[1], track, Some(0.9)),
            Err(Error::BadEllipticity { .. })
        ));
    }

    #[test]
    fn embedded_diffusion() {
        let track = CoefficientTrack::scalar(1, 3.0).unwrap();
        let spec = OperatorSpec::new(m(2, &[0.0, 0.0, 1.0, 0.0]), &[1, 1], track, None).unwrap();
        assert_eq!(spec.diffusion_at(0.0), m(2, &[3.0, 0.0, 0.0, 0.0]));
    }

    fn chain_drift(blocks: &[usize]) -> DMatrix<f64> {
        // subdiagonal blocks [I | 0] of shape m_j x m_{j-1}
        let n: usize = blocks.iter().sum();
        let mut b = DMatrix::zeros(n, n);
        let mut r = blocks[0];
        let mut c = 0;
        for j in 1..blocks.len() {
            for i in 0..blocks[j] {
                b[(r + i, c + i)] = 1.0;
            }
            c += blocks[j - 1];
            r += blocks[j];
        }
        b
    }

    fn nonincreasing_blocks() -> impl Strategy<Value = Vec<usize>> {
        proptest::collection::vec(1usize..4, 1..4).prop_map(|mut v| {
            v.sort_unstable_by(|a, b| b.cmp(a));
            v
        })
    }

    proptest! {
        #[test]
        fn structured_drifts_are_hypoelliptic(blocks in nonincreasing_blocks(),
                                              star in proptest::collection::vec(-1.0f64..1.0, 100)) {
            let mut b = chain_drift(&blocks);
            // fill the "*" region (block col >= block row) with noise
            let n = b.nrows();
            let owner: Vec<usize> = blocks.iter().enumerate()
                .flat_map(|(j, &m)| core::iter::repeat_n(j, m)).collect();
            for i in 0..n {
                for k in 0..n {
                    if owner[k] >= owner[i] {
                        b[(i, k)] = star[(i * n + k) % star.len()];
                    }
                }
            }
            let s = validate_structure(&b, &blocks).unwrap();
            prop_assert!(kalman_hypoelliptic(&b, blocks[0]));
            prop_assert!(s.sigma().iter().all(|v| v % 2 == 1));
            prop_assert_eq!(s.sigma()[0], 1);
            prop_assert_eq!(*s.sigma().last().unwrap() as usize, 2 * s.kappa() + 1);
            prop_assert!(s.homogeneous_dim() as usize >= n);
            prop_assert_eq!(s.homogeneous_dim() as usize == n, s.kappa() == 0);
        }

        #[test]
        fn ellipticity_sandwich(eigs in proptest::collection::vec(0.2f64..4.0, 2..6),
                                xi in proptest::collection::vec(-1.0f64..1.0, 2),
                                t in -10.0f64..10.0) {
            let pieces: Vec<_> = eigs.chunks(2).map(|c| {
                let l = if c.len() == 2 { c[1] } else { c[0] };
                m(2, &[c[0], 0.0, 0.0, l])
            }).collect();
            let breaks: Vec<f64> = (0..pieces.len()).map(|i| i as f64).collect();
            let track = CoefficientTrack::new(breaks, pieces).unwrap();
            let nu = nu_of(&track).unwrap();
            prop_assert!(nu <= 1.0);
            let a = track.coefficient_at(t);
            let x = nalgebra::DVector::from_vec(xi.clone());
            let form = (x.transpose() * a * &x)[(0, 0)];
            let n2 = x.norm_squared();
            prop_assert!(nu * n2 <= form * (1.0 + 1e-12));
            prop_assert!(form <= n2 / nu * (1.0 + 1e-12));
        }
    }
}
