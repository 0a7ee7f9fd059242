//! Plain-text formats: whitespace-separated numeric rows for datasets and
//! measures, and small CSV helpers.

use std::fmt::Write as _;

use crate::{Error, Result};

/// Shortest representation that parses back to the identical `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:e}")
}

/// Parses non-empty, non-comment (`#`) lines into rows of numbers, keeping
/// 1-based line numbers for diagnostics.
pub fn parse_rows(text: &str) -> Result<Vec<(usize, Vec<f64>)>> {
    let mut rows = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|_| Error::Parse {
                    line: idx + 1,
                    reason: format!("`{tok}` is not a number"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push((idx + 1, row));
    }
    Ok(rows)
}

/// Dataset of `n` points in `R^d`, one point per row.
pub fn parse_dataset(text: &str) -> Result<Vec<Vec<f64>>> {
    let rows = parse_rows(text)?;
    let Some(first) = rows.first() else {
        return Err(Error::Parse {
            line: 1,
            reason: "empty dataset".into(),
        });
    };
    let d = first.1.len();
    rows.into_iter()
        .map(|(line, row)| {
            if row.len() != d {
                return Err(Error::Parse {
                    line,
                    reason: format!("expected {d} columns, found {}", row.len()),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parse {
                    line,
                    reason: "non-finite value".into(),
                });
            }
            Ok(row)
        })
        .collect()
}

pub fn format_dataset(points: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for p in points {
        let row: Vec<String> = p.iter().map(|v| fmt_f64(*v)).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

/// Minimal CSV table with a fixed header. Fields are written verbatim, so
/// callers must not pass commas inside text fields.
#[derive(Debug, Clone, Default)]
pub struct CsvTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self {
            header: header.iter().map(|s| s.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn header(&self) -> &[String] {
        &self.header
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.header.join(","));
        for r in &self.rows {
            let _ = writeln!(out, "{}", r.join(","));
        }
        out
    }
}

/// Evaluation grid export: one row per node with coordinates then value.
pub fn density_grid_csv(nodes: &[Vec<f64>], values: &[f64]) -> String {
    let d = nodes.first().map_or(0, Vec::len);
    let mut header: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
    header.push("density".into());
    let mut table = CsvTable::new(&header);
    for (x, v) in nodes.iter().zip(values) {
        let mut row: Vec<String> = x.iter().map(|c| fmt_f64(*c)).collect();
        row.push(fmt_f64(*v));
        table.push(row);
    }
    table.render()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_formatting_round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 1.3, 6.02e23, 0.0] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn dataset_parse_reports_line() {
        let err = parse_dataset("# header\n1 2\n3 x\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
        let ok = parse_dataset("1 2\n\n3 4\n").unwrap();
        assert_eq!(ok, vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(parse_dataset(&format_dataset(&ok)).unwrap(), ok);
    }

    #[test]
    fn csv_renders_header_and_rows() {
        let mut t = CsvTable::new(&["a", "b"]);
        t.push(vec!["1".into(), "2".into()]);
        assert_eq!(t.render(), "a,b\n1,2\n");
        let g = density_grid_csv(&[vec![0.0, 1.0]], &[0.5]);
        assert_eq!(g, "x0,x1,density\n0e0,1e0,5e-1\n");
    }
}
