//! The `kfp-datum/1` TOML format for initial data.
//!
//! ```toml
//! schema = "kfp-datum/1"
//! kind = "gaussian-growth"      # or "bounded", "grid"
//! expr = "exp(x1^2)"
//! alpha = 1.01                  # gaussian-growth only
//! ```
//!
//! `bounded` takes an optional `sup`; without it the largest `|f|` seen on the
//! check box is used. `grid` takes `lower`, `upper`, `shape` and either
//! `values` (last axis fastest) or an `expr` sampled at the nodes. Callable
//! data are evaluated on a check box (`[check]` with `lower`, `upper`,
//! `shape`; default `[-4, 4]^N` with 9 nodes per axis) and must be finite
//! there.

use std::path::Path;

use kfp_core::cauchy::{CauchyDatum, UniformGrid};
use serde::{Deserialize, Serialize};

use crate::exit::{CliError, Stage};
use crate::expr::Expr;

pub const DATUM_SCHEMA: &str = "kfp-datum/1";

const DEFAULT_CHECK_HALF_WIDTH: f64 = 4.0;
const DEFAULT_CHECK_NODES: usize = 9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub shape: Vec<usize>,
}

impl BoxSpec {
    fn grid(&self) -> Result<UniformGrid, CliError> {
        Ok(UniformGrid::new(
            self.lower.clone(),
            self.upper.clone(),
            self.shape.clone(),
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatumFile {
    pub schema: String,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expr: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sup: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check: Option<BoxSpec>,
}

fn invalid(message: impl Into<String>) -> CliError {
    CliError::new(Stage::Validation, "InvalidDatum", message)
}

fn require<T: Clone>(field: &Option<T>, name: &str, kind: &str) -> Result<T, CliError> {
    field
        .clone()
        .ok_or_else(|| CliError::parse(format!("datum file: kind {kind:?} needs `{name}`")))
}

fn refuse(present: bool, name: &str, kind: &str) -> Result<(), CliError> {
    if present {
        Err(CliError::parse(format!(
            "datum file: `{name}` does not apply to kind {kind:?}"
        )))
    } else {
        Ok(())
    }
}

impl DatumFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let file: Self = toml::from_str(text).map_err(|e| CliError::parse(format!("datum file: {e}")))?;
        if file.schema != DATUM_SCHEMA {
            return Err(CliError::parse(format!(
                "datum file: schema is {:?}, expected {DATUM_SCHEMA:?}",
                file.schema
            )));
        }
        Ok(file)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::parse(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("datum files always serialize")
    }

    /// A callable datum from an expression.
    pub fn callable(kind: &str, expr: &str) -> Self {
        Self {
            schema: DATUM_SCHEMA.to_string(),
            kind: kind.to_string(),
            expr: Some(expr.to_string()),
            alpha: None,
            sup: None,
            lower: None,
            upper: None,
            shape: None,
            values: None,
            check: None,
        }
    }

    fn expression(&self, dim: usize) -> Result<Expr, CliError> {
        let text = require(&self.expr, "expr", &self.kind)?;
        Expr::parse(&text, dim).map_err(|e| CliError::parse(format!("datum file: {e}")))
    }

    fn check_box(&self, dim: usize) -> Result<UniformGrid, CliError> {
        match &self.check {
            Some(b) => b.grid(),
            None => Ok(UniformGrid::new(
                vec![-DEFAULT_CHECK_HALF_WIDTH; dim],
                vec![DEFAULT_CHECK_HALF_WIDTH; dim],
                vec![DEFAULT_CHECK_NODES; dim],
            )?),
        }
    }

    /// Largest `|f|` on the check box; fails on a non-finite value.
    fn probe(&self, f: &Expr, dim: usize) -> Result<f64, CliError> {
        let grid = self.check_box(dim)?;
        if grid.dim() != dim {
            return Err(invalid(format!(
                "check box has dimension {}, problem has {dim}",
                grid.dim()
            )));
        }
        let mut sup = 0.0f64;
        for y in grid.points() {
            let v = f.eval(&y);
            if !v.is_finite() {
                return Err(invalid(format!("expression {:?} is {v} at {y:?}", f.source())));
            }
            sup = sup.max(v.abs());
        }
        Ok(sup)
    }

    /// The datum for a problem of dimension `dim`.
    pub fn to_datum(&self, dim: usize) -> Result<CauchyDatum, CliError> {
        let kind = self.kind.as_str();
        match kind {
            "bounded" => {
                refuse(self.alpha.is_some(), "alpha", kind)?;
                refuse(self.values.is_some(), "values", kind)?;
                let f = self.expression(dim)?;
                let seen = self.probe(&f, dim)?;
                let sup = self.sup.unwrap_or(seen);
                if seen > sup {
                    return Err(invalid(format!(
                        "|f| reaches {seen} on the check box, above sup = {sup}"
                    )));
                }
                Ok(CauchyDatum::bounded(move |y| f.eval(y), sup)?)
            }
            "gaussian-growth" => {
                refuse(self.sup.is_some(), "sup", kind)?;
                refuse(self.values.is_some(), "values", kind)?;
                let alpha = require(&self.alpha, "alpha", kind)?;
                let f = self.expression(dim)?;
                self.probe(&f, dim)?;
                Ok(CauchyDatum::gaussian_growth(move |y| f.eval(y), alpha)?)
            }
            "grid" => {
                refuse(self.alpha.is_some(), "alpha", kind)?;
                refuse(self.sup.is_some(), "sup", kind)?;
                refuse(self.check.is_some(), "check", kind)?;
                let grid = BoxSpec {
                    lower: require(&self.lower, "lower", kind)?,
                    upper: require(&self.upper, "upper", kind)?,
                    shape: require(&self.shape, "shape", kind)?,
                }
                .grid()?;
                if grid.dim() != dim {
                    return Err(invalid(format!("grid has dimension {}, problem has {dim}", grid.dim())));
                }
                let values = match (&self.values, &self.expr) {
                    (Some(v), None) => v.clone(),
                    (None, Some(_)) => {
                        let f = self.expression(dim)?;
                        grid.points().iter().map(|y| f.eval(y)).collect()
                    }
                    _ => {
                        return Err(CliError::parse(
                            "datum file: kind \"grid\" needs exactly one of `values`, `expr`",
                        ))
                    }
                };
                if let Some(i) = values.iter().position(|v| !v.is_finite()) {
                    return Err(invalid(format!("grid value {i} is {}", values[i])));
                }
                Ok(CauchyDatum::grid(grid, values)?)
            }
            other => Err(CliError::parse(format!(
                "datum file: unknown kind {other:?} (expected \"bounded\", \"gaussian-growth\" or \"grid\")"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn callable_kinds() {
        let d = DatumFile::parse("schema = \"kfp-datum/1\"\nkind = \"bounded\"\nexpr = \"1\"\n").unwrap();
        let datum = d.to_datum(2).unwrap();
        assert_eq!(datum.eval(&[0.3, -2.0]), 1.0);

        let mut g = DatumFile::callable("gaussian-growth", "exp(x1^2)");
        g.alpha = Some(1.01);
        let datum = g.to_datum(1).unwrap();
        assert_eq!(datum.growth_alpha(), Some(1.01));
        assert_eq!(datum.eval(&[1.0]), std::f64::consts::E);
    }

    #[test]
    fn grid_from_values_or_expression() {
        let text = "schema = \"kfp-datum/1\"\nkind = \"grid\"\nlower = [-1.0]\nupper = [1.0]\nshape = [3]\nvalues = [0.0, 1.0, 0.0]\n";
        let datum = DatumFile::parse(text).unwrap().to_datum(1).unwrap();
        assert_eq!(datum.eval(&[0.0]), 1.0);
        assert_eq!(datum.eval(&[0.5]), 0.5);
        let sampled = text.replace("values = [0.0, 1.0, 0.0]", "expr = \"1 - abs(x1)\"");
        let datum = DatumFile::parse(&sampled).unwrap().to_datum(1).unwrap();
        assert_eq!(datum.eval(&[0.5]), 0.5);
    }

    #[test]
    fn round_trips_through_toml() {
        let mut g = DatumFile::callable("gaussian-growth", "exp(x1^2)");
        g.alpha = Some(0.1);
        assert_eq!(DatumFile::parse(&g.to_toml()).unwrap(), g);
    }

    #[test]
    fn errors_are_classified() {
        let bad_expr = DatumFile::callable("bounded", "exp(");
        assert_eq!(bad_expr.to_datum(1).unwrap_err().stage, Stage::Parse);
        let blows_up = DatumFile::callable("bounded", "1 / x1");
        assert_eq!(blows_up.to_datum(1).unwrap_err().stage, Stage::Validation);
        let mut too_small = DatumFile::callable("bounded", "x1");
        too_small.sup = Some(1.0);
        assert_eq!(too_small.to_datum(1).unwrap_err().stage, Stage::Validation);
        let no_alpha = DatumFile::callable("gaussian-growth", "1");
        assert_eq!(no_alpha.to_datum(1).unwrap_err().stage, Stage::Parse);
        let unknown = DatumFile::callable("smooth", "1");
        assert_eq!(unknown.to_datum(1).unwrap_err().stage, Stage::Parse);
        let wrong_var = DatumFile::callable("bounded", "x2");
        assert_eq!(wrong_var.to_datum(1).unwrap_err().stage, Stage::Parse);
    }
}
