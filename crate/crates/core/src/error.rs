use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("matrix exponential overflows (norm of s*M is {norm:e})")]
    Overflow { norm: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not symmetric (relative asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error(
        "matrix is not positive definite; for a covariance this means t <= t0 or the drift fails the rank condition"
    )]
    NotPositiveDefinite,

    #[error("bad block shape: {0}")]
    BadBlockShape(String),
    #[error("subdiagonal block B_{j} does not have full rank {expected} (numerical rank {found})")]
    RankDeficientBlock { j: usize, expected: usize, found: usize },
    #[error("block ({row},{col}) below the first subdiagonal must vanish (max entry {max_abs:e})")]
    NonZeroForbiddenBlock { row: usize, col: usize, max_abs: f64 },
    #[error("coefficient piece {index} is not positive definite (smallest eigenvalue {min_eig:e})")]
    NonPositivePiece { index: usize, min_eig: f64 },
    #[error("invalid coefficient track: {0}")]
    BadTrack(String),
    #[error("declared ellipticity constant {declared} is outside (0, {admissible}]")]
    BadEllipticity { declared: f64, admissible: f64 },

    #[error("time {t} is not after the initial time {t0}")]
    NotAfterInitialTime { t0: f64, t: f64 },
    #[error("time {t} lies within {window:e} of the coefficient breakpoint {breakpoint}")]
    BreakpointTooClose { t: f64, breakpoint: f64, window: f64 },
    #[error("requested span {requested} exceeds the usable horizon {horizon} (raw horizon {raw})")]
    HorizonExceeded { requested: f64, horizon: f64, raw: f64 },
    #[error("no positive horizon exists for growth rate {alpha}")]
    NoPositiveHorizon { alpha: f64 },
    #[error("tensor Gauss-Hermite quadrature supports N <= 3, got N = {0}")]
    UnsupportedDimension(usize),
    #[error("short-time constant fit failed: {0}")]
    FitFailed(String),
    #[error("diffusion matrix sigma(t) is inconsistent with A0(t) on piece {piece} (deviation {deviation:e})")]
    InconsistentSigma { piece: usize, deviation: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
