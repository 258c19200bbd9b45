//! Errors of the command-line layer and their exit codes.

use std::fmt;
use std::process::ExitCode;

use kfp_core::Error;

/// Where a run failed; each stage has a fixed exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Unreadable or malformed input, bad flags, unwritable output: 2.
    Parse,
    /// Well-formed input that violates a model assumption: 3.
    Validation,
    /// A computation failed (overflow, lost definiteness): 4.
    Numeric,
    /// The requested time is beyond the solution horizon: 5.
    Horizon,
}

impl Stage {
    pub fn code(self) -> u8 {
        match self {
            Stage::Parse => 2,
            Stage::Validation => 3,
            Stage::Numeric => 4,
            Stage::Horizon => 5,
        }
    }
}

/// Exit code when every command step succeeded but a check failed.
pub const CHECK_FAILED: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub stage: Stage,
    /// Stable name of the failure, e.g. `RankDeficientBlock`.
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(stage: Stage, kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            stage,
            kind,
            message: message.into(),
        }
    }

    pub fn parse(message: impl Into<String>) -> Self {
        Self::new(Stage::Parse, "ParseError", message)
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.stage.code())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl std::error::Error for CliError {}

/// Stage and stable name of a core error.
pub fn classify(e: &Error) -> (Stage, &'static str) {
    use Stage::*;
    match e {
        Error::NonFinite => (Numeric, "NonFinite"),
        Error::Overflow { .. } => (Numeric, "Overflow"),
        Error::NotPositiveDefinite => (Numeric, "NotPositiveDefinite"),
        Error::FitFailed(_) => (Numeric, "FitFailed"),
        Error::DimensionMismatch(_) => (Validation, "DimensionMismatch"),
        Error::NotSymmetric(_) => (Validation, "NotSymmetric"),
        Error::BadBlockShape(_) => (Validation, "BadBlockShape"),
        Error::RankDeficientBlock { .. } => (Validation, "RankDeficientBlock"),
        Error::NonZeroForbiddenBlock { .. } => (Validation, "NonZeroForbiddenBlock"),
        Error::NonPositivePiece { .. } => (Validation, "NonPositivePiece"),
        Error::BadTrack(_) => (Validation, "BadTrack"),
        Error::BadEllipticity { .. } => (Validation, "BadEllipticity"),
        Error::NotAfterInitialTime { .. } => (Validation, "NotAfterInitialTime"),
        Error::BreakpointTooClose { .. } => (Validation, "BreakpointTooClose"),
        Error::UnsupportedDimension(_) => (Validation, "UnsupportedDimension"),
        Error::InconsistentSigma { .. } => (Validation, "InconsistentSigma"),
        Error::InvalidArgument(_) => (Validation, "InvalidArgument"),
        Error::HorizonExceeded { .. } => (Horizon, "HorizonExceeded"),
        Error::NoPositiveHorizon { .. } => (Horizon, "NoPositiveHorizon"),
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let (stage, kind) = classify(&e);
        Self::new(stage, kind, e.to_string())
    }
}
