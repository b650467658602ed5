//! CSV artifacts with a fixed numeric format.

use std::fs::File;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("row {row} has {got} fields, header has {expected}")]
    Arity { row: usize, expected: usize, got: usize },
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Csv { path: String, source: csv::Error },
}

/// One CSV field.
#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<i64> for Cell {
    fn from(x: i64) -> Self {
        Cell::Int(x)
    }
}

impl From<u32> for Cell {
    fn from(x: u32) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

impl Cell {
    pub fn render(&self) -> String {
        match self {
            Cell::Num(x) => format_num(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

/// Twelve significant digits: positional for magnitudes in `[1e-4, 1e12)`,
/// scientific otherwise. Non-finite values print as `inf`, `-inf`, `NaN`.
pub fn format_num(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0.00000000000".into();
    }
    let sci = format!("{:.11e}", x);
    let exp: i32 = sci[sci.find('e').unwrap() + 1..].parse().unwrap();
    if (-4..12).contains(&exp) {
        format!("{:.*}", (11 - exp) as usize, x)
    } else {
        sci
    }
}

/// Writes `header` then `rows` in order. Every row must match the header arity.
pub fn emit_csv(rows: &[Vec<Cell>], header: &[&str], path: &Path) -> Result<(), OutputError> {
    for (i, r) in rows.iter().enumerate() {
        if r.len() != header.len() {
            return Err(OutputError::Arity { row: i, expected: header.len(), got: r.len() });
        }
    }
    let p = path.display().to_string();
    let file = File::create(path).map_err(|source| OutputError::Io { path: p.clone(), source })?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header).map_err(|source| OutputError::Csv { path: p.clone(), source })?;
    for r in rows {
        w.write_record(r.iter().map(Cell::render)).map_err(|source| OutputError::Csv { path: p.clone(), source })?;
    }
    w.flush().map_err(|source| OutputError::Io { path: p, source })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(format_num(1.0), "1.00000000000");
        assert_eq!(format_num(-0.125), "-0.125000000000");
        assert_eq!(format_num(123456.7890123456), "123456.789012");
        assert_eq!(format_num(9.9999999999999), "10.0000000000");
        assert_eq!(format_num(1.5e-7), "1.50000000000e-7");
        assert_eq!(format_num(f64::INFINITY), "inf");
    }

    #[test]
    fn relative_rounding_error_is_bounded() {
        for &x in &[std::f64::consts::PI, 1.0 / 3.0, 2.0f64.sqrt() * 1e-9, 6.02214076e23, -7.77e-3] {
            let back: f64 = format_num(x).parse().unwrap();
            assert!(((back - x) / x).abs() <= 5e-12, "{x}");
        }
    }
}
