//! Check reports and their CSV / JSON serialization.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;

/// Formats a real with 17 significant digits, enough to round-trip any
/// `f64` exactly.
pub fn fmt_real(x: f64) -> String {
    if x == 0.0 {
        // Avoid "-0" differences between otherwise identical runs.
        return "0.0000000000000000e0".to_string();
    }
    format!("{x:.16e}")
}

/// Writes `bytes` to `path` via a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Index(usize),
    Real(f64),
}

impl Value {
    pub fn as_f64(self) -> f64 {
        match self {
            Value::Index(i) => i as f64,
            Value::Real(x) => x,
        }
    }

    fn render(self) -> String {
        match self {
            Value::Index(i) => i.to_string(),
            Value::Real(x) => fmt_real(x),
        }
    }
}

impl From<usize> for Value {
    fn from(i: usize) -> Self {
        Value::Index(i)
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Real(x)
    }
}

/// Outcome of one check: a table plus a pass/fail verdict on the range of
/// its ratio column.
#[derive(Debug, Clone)]
pub struct EstimateReport {
    pub check: String,
    pub columns: Vec<String>,
    /// The first `key_columns` columns identify a row.
    pub key_columns: usize,
    /// Column holding the ratio summarized by `min_ratio`/`max_ratio`.
    pub ratio_column: usize,
    pub rows: Vec<Vec<Value>>,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub pass: bool,
    /// Scalar diagnostics such as fitted slopes or residuals.
    pub metrics: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
    pub runtime_seconds: f64,
}

impl EstimateReport {
    pub fn new(check: &str, columns: &[&str], key_columns: usize, ratio_column: &str) -> Self {
        let ratio_column = columns
            .iter()
            .position(|c| *c == ratio_column)
            .expect("ratio column must be one of the columns");
        Self {
            check: check.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            key_columns,
            ratio_column,
            rows: Vec::new(),
            min_ratio: f64::NAN,
            max_ratio: f64::NAN,
            pass: false,
            metrics: BTreeMap::new(),
            warnings: Vec::new(),
            runtime_seconds: 0.0,
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        assert_eq!(row.len(), self.columns.len(), "row width differs from header");
        self.rows.push(row);
    }

    pub fn metric(&mut self, name: &str, value: f64) {
        self.metrics.insert(name.to_string(), value);
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        let m = message.into();
        log::warn!("{}: {m}", self.check);
        self.warnings.push(m);
    }

    /// Sorts rows by their key columns and recomputes the ratio range.
    pub fn finalize(&mut self) {
        let k = self.key_columns;
        self.rows.sort_by(|a, b| {
            for i in 0..k {
                let o = a[i].as_f64().total_cmp(&b[i].as_f64());
                if o.is_ne() {
                    return o;
                }
            }
            std::cmp::Ordering::Equal
        });
        let ratios = self.rows.iter().map(|r| r[self.ratio_column].as_f64()).filter(|x| !x.is_nan());
        let (lo, hi) = ratios.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
        if lo <= hi {
            self.min_ratio = lo;
            self.max_ratio = hi;
        }
    }

    /// Finalizes with the verdict `max_ratio <= bound`.
    pub fn pass_if_max_at_most(&mut self, bound: f64) {
        self.finalize();
        self.pass = !self.rows.is_empty() && self.max_ratio <= bound;
    }

    /// Finalizes with the verdict `max_ratio / min_ratio <= bound`.
    pub fn pass_if_spread_at_most(&mut self, bound: f64) {
        self.finalize();
        self.pass = !self.rows.is_empty() && self.min_ratio > 0.0 && self.max_ratio / self.min_ratio <= bound;
    }

    /// Finalizes with the verdict `lo <= min_ratio` and `max_ratio <= hi`.
    pub fn pass_if_within(&mut self, lo: f64, hi: f64) {
        self.finalize();
        self.pass = !self.rows.is_empty() && self.min_ratio >= lo && self.max_ratio <= hi;
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i].as_f64()).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| v.render()).collect();
            let _ = writeln!(s, "{}", cells.join(","));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }

    pub fn summary(&self) -> CheckSummary {
        let finite = |x: f64| if x.is_finite() { Some(x) } else { None };
        CheckSummary {
            pass: self.pass,
            min_ratio: finite(self.min_ratio),
            max_ratio: finite(self.max_ratio),
            rows: self.rows.len(),
            metrics: self.metrics.iter().map(|(k, v)| (k.clone(), finite(*v))).collect(),
            warnings: self.warnings.len(),
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CheckSummary {
    pub pass: bool,
    pub min_ratio: Option<f64>,
    pub max_ratio: Option<f64>,
    pub rows: usize,
    pub metrics: BTreeMap<String, Option<f64>>,
    pub warnings: usize,
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reals_round_trip() {
        for x in [0.1, 1.0 / 3.0, 6.02214076e23, -2.5e-300, f64::MIN_POSITIVE] {
            let s = fmt_real(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(fmt_real(-0.0), fmt_real(0.0));
    }

    #[test]
    fn rows_sorted_and_ranged() {
        let mut r = EstimateReport::new("t", &["xi", "r", "ratio"], 2, "ratio");
        r.push(vec![3usize.into(), 1.0.into(), 2.0.into()]);
        r.push(vec![1usize.into(), 2.0.into(), 0.5.into()]);
        r.push(vec![1usize.into(), 1.0.into(), 4.0.into()]);
        r.pass_if_spread_at_most(8.0);
        assert!(r.pass);
        assert_eq!(r.column("ratio").unwrap(), vec![4.0, 0.5, 2.0]);
        assert_eq!((r.min_ratio, r.max_ratio), (0.5, 4.0));
        assert!(r.to_csv().starts_with("xi,r,ratio\n1,1.0000000000000000e0,"));
    }

    #[test]
    fn slope_of_power_law() {
        let x: Vec<f64> = (1..10).map(|k| k as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v.powf(-1.5)).collect();
        assert!((log_log_slope(&x, &y) + 1.5).abs() < 1e-12);
    }
}
