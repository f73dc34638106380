//! Tabular and summary output with a bit-stability contract: identical
//! configuration (and seed) must reproduce identical bytes, regardless of
//! thread count or run order.  Floats are printed in scientific notation
//! with 17 significant digits, which round-trips f64 exactly.

use sha2::{Digest, Sha256};
use std::io::Write;
use wavebound::{Error, Result};

#[derive(Clone, Debug)]
pub enum Cell {
    Num(f64),
    Size(usize),
    Bool(bool),
    Text(String),
}

impl Cell {
    fn write_to(&self, out: &mut String) {
        match self {
            Cell::Num(v) => {
                if v.is_nan() {
                    out.push_str("nan");
                } else if v.is_infinite() {
                    out.push_str(if *v > 0.0 { "inf" } else { "-inf" });
                } else {
                    // 1 leading + 16 fractional digits = 17 significant;
                    // −0.0 folds to 0.0 so a sign bit never leaks into text.
                    let v = if *v == 0.0 { 0.0 } else { *v };
                    out.push_str(&format!("{v:.16e}"));
                }
            }
            Cell::Size(v) => out.push_str(&v.to_string()),
            Cell::Bool(v) => out.push_str(if *v { "true" } else { "false" }),
            Cell::Text(s) => out.push_str(s),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Size(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        Cell::Num(v.unwrap_or(f64::NAN))
    }
}

/// One experiment's tabular result plus its JSON summary.
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
    pub summary: serde_json::Value,
    /// Set when a verification suite ran and failed (exit 4).
    pub verification_failed: bool,
}

impl Table {
    pub fn new(header: Vec<&'static str>) -> Self {
        Table {
            header,
            rows: Vec::new(),
            summary: serde_json::Value::Null,
            verification_failed: false,
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// Render the CSV body: provenance comment, header row, data rows.
    /// LF endings, UTF-8, no trailing spaces.
    pub fn render_csv(&self, config_sha256: &str) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "# config_sha256={config_sha256} version={}\n",
            wavebound::VERSION
        ));
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            let mut first = true;
            for cell in row {
                if !first {
                    out.push(',');
                }
                first = false;
                cell.write_to(&mut out);
            }
            out.push('\n');
        }
        out
    }
}

pub fn sha256_hex(data: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(data.as_bytes());
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for b in digest {
        hex.push_str(&format!("{b:02x}"));
    }
    hex
}

pub fn write_file(path: &str, contents: &str) -> Result<()> {
    let mut f = std::fs::File::create(path)
        .map_err(|e| Error::validation(format!("cannot create {path}: {e}")))?;
    f.write_all(contents.as_bytes())
        .map_err(|e| Error::validation(format!("cannot write {path}: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_cells_round_trip_f64() {
        for v in [0.1, -2.5e-17, 1.0 / 3.0, 6.626e34, 0.0] {
            let mut s = String::new();
            Cell::Num(v).write_to(&mut s);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits(), "{v} → {s}");
        }
        // −0.0 is folded onto +0.0 before formatting.
        let mut s = String::new();
        Cell::Num(-0.0).write_to(&mut s);
        assert_eq!(s, "0.0000000000000000e0");
        let mut s = String::new();
        Cell::Num(f64::NAN).write_to(&mut s);
        assert_eq!(s, "nan");
    }

    #[test]
    fn csv_layout_is_stable() {
        let mut t = Table::new(vec!["a", "b"]);
        t.push(vec![Cell::Num(1.5), Cell::Bool(true)]);
        let csv = t.render_csv("deadbeef");
        let lines: Vec<&str> = csv.split('\n').collect();
        assert!(lines[0].starts_with("# config_sha256=deadbeef version="));
        assert_eq!(lines[1], "a,b");
        assert_eq!(lines[2], "1.5000000000000000e0,true");
        assert_eq!(lines[3], "");
        assert!(!csv.contains('\r'));
    }

    #[test]
    fn sha256_matches_known_vector() {
        assert_eq!(
            sha256_hex(""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}
