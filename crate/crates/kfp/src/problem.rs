//! The `kfp-problem/1` TOML format.
//!
//! ```toml
//! schema = "kfp-problem/1"
//! N = 2
//! q = 1
//! blocks = [1, 1]
//! B = [0.0, 0.0, 1.0, 0.0]      # row-major N x N
//! nu = 1.0                      # optional, computed from the pieces if absent
//!
//! [coefficients]
//! breakpoints = [0.0]           # start of each piece; the first piece also covers earlier times
//! pieces = [[1.0]]              # row-major q x q, one per breakpoint
//! ```
//!
//! Floats are written in shortest round-trip form, so a spec survives
//! `file -> spec -> file` with bit-equal matrices.

use kfp_core::operator::{CoefficientTrack, OperatorSpec};
use kfp_core::DMatrix;
use serde::{Deserialize, Serialize};

use crate::exit::{CliError, Stage};

pub const PROBLEM_SCHEMA: &str = "kfp-problem/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub schema: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub q: usize,
    pub blocks: Vec<usize>,
    #[serde(rename = "B")]
    pub drift: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    pub coefficients: Coefficients,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coefficients {
    pub breakpoints: Vec<f64>,
    pub pieces: Vec<Vec<f64>>,
}

fn square(values: &[f64], n: usize, what: &str) -> Result<DMatrix<f64>, CliError> {
    if values.len() != n * n {
        return Err(CliError::new(
            Stage::Validation,
            "DimensionMismatch",
            format!("{what} has {} entries, expected {n} x {n} = {}", values.len(), n * n),
        ));
    }
    Ok(DMatrix::from_row_slice(n, n, values))
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

impl ProblemFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let file: Self = toml::from_str(text).map_err(|e| CliError::parse(format!("problem file: {e}")))?;
        if file.schema != PROBLEM_SCHEMA {
            return Err(CliError::parse(format!(
                "problem file: schema is {:?}, expected {PROBLEM_SCHEMA:?}",
                file.schema
            )));
        }
        Ok(file)
    }

    pub fn read(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::parse(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("problem files always serialize")
    }

    /// The drift matrix and declared shape, without any structural checks.
    pub fn drift_matrix(&self) -> Result<DMatrix<f64>, CliError> {
        square(&self.drift, self.n, "B")
    }

    /// The coefficient track; pieces must be `q x q`.
    pub fn track(&self) -> Result<CoefficientTrack, CliError> {
        let pieces = self
            .coefficients
            .pieces
            .iter()
            .enumerate()
            .map(|(i, p)| square(p, self.q, &format!("coefficient piece {i}")))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(CoefficientTrack::new(self.coefficients.breakpoints.clone(), pieces)?)
    }

    pub fn to_spec(&self) -> Result<OperatorSpec, CliError> {
        let drift = self.drift_matrix()?;
        if self.blocks.first() != Some(&self.q) {
            return Err(CliError::new(
                Stage::Validation,
                "BadBlockShape",
                format!(
                    "q = {} must equal the first block size (blocks {:?})",
                    self.q, self.blocks
                ),
            ));
        }
        Ok(OperatorSpec::new(drift, &self.blocks, self.track()?, self.nu)?)
    }

    /// The file that describes `spec`, including its `nu`.
    pub fn from_spec(spec: &OperatorSpec) -> Self {
        let track = spec.track();
        Self {
            schema: PROBLEM_SCHEMA.to_string(),
            n: spec.dim(),
            q: spec.q(),
            blocks: spec.structure().blocks().to_vec(),
            drift: row_major(spec.drift()),
            nu: Some(spec.nu()),
            coefficients: Coefficients {
                breakpoints: track.breakpoints().to_vec(),
                pieces: track.pieces().iter().map(row_major).collect(),
            },
        }
    }
}
