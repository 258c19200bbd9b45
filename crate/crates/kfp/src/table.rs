//! CSV tables and the small textual inputs of the CLI (points, grids, time
//! lists).
//!
//! Tables use `,` separators, `.` decimals, one header row and LF line
//! endings. Numbers are printed in shortest round-trip form.

use std::io::{Read, Write};

use kfp_core::cauchy::UniformGrid;

use crate::exit::CliError;

/// Shortest round-trip text of `v`; non-finite values print as `NaN`, `inf`
/// and `-inf`.
pub fn number(v: f64) -> String {
    ryu::Buffer::new().format(v).to_string()
}

/// A table with a fixed header, filled row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: Vec<String>) -> Self {
        Self {
            header,
            rows: Vec::new(),
        }
    }

    pub fn header(&self) -> &[String] {
        &self.header
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.header.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn write_to(&self, out: impl Write) -> Result<(), CliError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        let io = |e: csv::Error| CliError::parse(format!("cannot write table: {e}"));
        w.write_record(&self.header).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|&v| number(v))).map_err(io)?;
        }
        w.flush()
            .map_err(|e| CliError::parse(format!("cannot write table: {e}")))
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("CSV output is UTF-8")
    }
}

/// `x1..xN` column names.
pub fn coordinate_names(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

fn parse_f64(text: &str, what: &str) -> Result<f64, CliError> {
    let v: f64 = text
        .trim()
        .parse()
        .map_err(|_| CliError::parse(format!("{what}: {text:?} is not a number")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::parse(format!("{what}: {text:?} is not finite")))
    }
}

/// Comma-separated numbers, e.g. `0.1,0.5,1`.
pub fn parse_list(text: &str, what: &str) -> Result<Vec<f64>, CliError> {
    text.split(',').map(|s| parse_f64(s, what)).collect()
}

/// A space-time point `x1,...,xN@t`.
pub fn parse_point(text: &str, n: usize, what: &str) -> Result<(Vec<f64>, f64), CliError> {
    let (x, t) = text
        .split_once('@')
        .ok_or_else(|| CliError::parse(format!("{what}: expected X1,...,XN@T, got {text:?}")))?;
    let x = parse_list(x, what)?;
    if x.len() != n {
        return Err(CliError::parse(format!(
            "{what}: {text:?} has {} coordinates, the problem has N = {n}",
            x.len()
        )));
    }
    Ok((x, parse_f64(t, what)?))
}

/// A box grid `LO:HI:COUNT` per axis, axes separated by commas.
pub fn parse_grid(text: &str, n: usize) -> Result<UniformGrid, CliError> {
    let axes: Vec<&str> = text.split(',').collect();
    if axes.len() != n {
        return Err(CliError::parse(format!(
            "--grid: {text:?} has {} axes, the problem has N = {n}",
            axes.len()
        )));
    }
    let (mut lower, mut upper, mut shape) = (Vec::new(), Vec::new(), Vec::new());
    for axis in axes {
        let parts: Vec<&str> = axis.split(':').collect();
        let [lo, hi, count] = parts[..] else {
            return Err(CliError::parse(format!("--grid: axis {axis:?} is not LO:HI:COUNT")));
        };
        lower.push(parse_f64(lo, "--grid")?);
        upper.push(parse_f64(hi, "--grid")?);
        shape.push(
            count
                .trim()
                .parse()
                .map_err(|_| CliError::parse(format!("--grid: {count:?} is not a node count")))?,
        );
    }
    Ok(UniformGrid::new(lower, upper, shape)?)
}

/// Points from a CSV with header `x1,...,xN,t`.
pub fn read_points(input: impl Read, n: usize) -> Result<Vec<(Vec<f64>, f64)>, CliError> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let bad = |e: csv::Error| CliError::parse(format!("points file: {e}"));
    let header: Vec<String> = r.headers().map_err(bad)?.iter().map(str::to_string).collect();
    let mut expected = coordinate_names("x", n);
    expected.push("t".to_string());
    if header != expected {
        return Err(CliError::parse(format!(
            "points file: header {header:?}, expected {expected:?}"
        )));
    }
    let mut out = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record.map_err(bad)?;
        let what = format!("points file row {}", line + 1);
        let values = record
            .iter()
            .map(|s| parse_f64(s, &what))
            .collect::<Result<Vec<_>, _>>()?;
        out.push((values[..n].to_vec(), values[n]));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip_and_use_lf() {
        let mut t = Table::new(vec!["x1".into(), "gamma".into()]);
        t.push(vec![0.1, 1e-300]);
        t.push(vec![-2.0, f64::NEG_INFINITY]);
        let text = t.to_csv();
        assert_eq!(text, "x1,gamma\n0.1,1e-300\n-2.0,-inf\n");
        assert!(!text.contains('\r'));
        let v: f64 = number(0.1 + 0.2).parse().unwrap();
        assert_eq!(v, 0.1 + 0.2);
    }

    #[test]
    fn point_and_grid_syntax() {
        assert_eq!(parse_point("0,0@1", 2, "p").unwrap(), (vec![0.0, 0.0], 1.0));
        assert_eq!(parse_point("-1.5@0", 1, "p").unwrap(), (vec![-1.5], 0.0));
        assert!(parse_point("0,0", 2, "p").is_err());
        assert!(parse_point("0@1", 2, "p").is_err());
        assert!(parse_point("0@nan", 1, "p").is_err());
        let g = parse_grid("-1:1:3,0:2:5", 2).unwrap();
        assert_eq!(g.len(), 15);
        assert!(parse_grid("-1:1", 1).is_err());
        assert!(parse_grid("-1:1:3", 2).is_err());
        assert_eq!(parse_list("0.1, 0.2", "t").unwrap(), vec![0.1, 0.2]);
    }

    #[test]
    fn points_file() {
        let text = "x1,x2,t\n0,0,1\n1.5,-2,0.25\n";
        let pts = read_points(text.as_bytes(), 2).unwrap();
        assert_eq!(pts, vec![(vec![0.0, 0.0], 1.0), (vec![1.5, -2.0], 0.25)]);
        assert!(read_points("x1,t\n0,1\n".as_bytes(), 2).is_err());
        assert!(read_points("x1,x2,t\n0,a,1\n".as_bytes(), 2).is_err());
        assert!(read_points("x1,x2,t\n0,1\n".as_bytes(), 2).is_err());
    }
}
