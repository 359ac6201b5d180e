//! Instance files.
//!
//! The native format is JSON:
//!
//! ```json
//! { "n": 3, "s": 2, "t": 1,
//!   "C": [2, 1, 0, 1, 2, 1, 0, 1, 2],
//!   "A": [[1, 1, 0]], "b": [1.5],
//!   "l": [0, 0, 0], "c": [1, 1, 1] }
//! ```
//!
//! `C` and `A` may be flat row-major arrays or arrays of rows. Instead of `C`,
//! a `C_file` entry may reference a dense CSV file or a Matrix Market file
//! (`matrix coordinate real symmetric` or `matrix array real general`),
//! resolved relative to the JSON file.

use super::Instance;
use crate::error::{GmespError, Result};
use crate::linalg::{Mat, Vector};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Matrix payload: flat row-major or nested rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixData {
    /// Row-major entries.
    Flat(Vec<f64>),
    /// One array per row.
    Rows(Vec<Vec<f64>>),
}

/// On-disk instance record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceFile {
    /// Order of `C`.
    pub n: usize,
    /// Selection size.
    pub s: usize,
    /// Eigenvalue count.
    pub t: usize,
    /// Covariance matrix.
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub cov: Option<MatrixData>,
    /// Path of an external covariance file (CSV or Matrix Market).
    #[serde(rename = "C_file", default, skip_serializing_if = "Option::is_none")]
    pub cov_file: Option<String>,
    /// Side-constraint matrix.
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub a: Option<MatrixData>,
    /// Side-constraint right-hand side.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    /// Lower box.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<Vec<f64>>,
    /// Upper box.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<f64>>,
}

fn parse_err(msg: impl Into<String>) -> GmespError {
    GmespError::Parse(msg.into())
}

fn to_matrix(data: &MatrixData, rows: usize, cols: usize, name: &str) -> Result<Mat> {
    match data {
        MatrixData::Flat(v) => {
            if v.len() != rows * cols {
                return Err(parse_err(format!(
                    "{name} has {} entries, expected {rows}x{cols}",
                    v.len()
                )));
            }
            Ok(Mat::from_row_slice(rows, cols, v))
        }
        MatrixData::Rows(r) => {
            if r.len() != rows || r.iter().any(|row| row.len() != cols) {
                return Err(parse_err(format!("{name} is not a {rows}x{cols} array of rows")));
            }
            Ok(Mat::from_fn(rows, cols, |i, j| r[i][j]))
        }
    }
}

impl InstanceFile {
    /// Serializable record of an instance (flat row-major matrices).
    pub fn from_instance(inst: &Instance) -> Self {
        let n = inst.n();
        let row_major = |m: &Mat| MatrixData::Flat(m.transpose().iter().copied().collect());
        let has_rows = inst.m() > 0;
        InstanceFile {
            n,
            s: inst.s,
            t: inst.t,
            cov: Some(row_major(&inst.cov)),
            cov_file: None,
            a: has_rows.then(|| row_major(&inst.a)),
            b: has_rows.then(|| inst.b.iter().copied().collect()),
            l: Some(inst.lower.iter().copied().collect()),
            c: Some(inst.upper.iter().copied().collect()),
        }
    }

    /// Builds and validates the instance; `base` resolves `C_file`.
    pub fn into_instance(self, base: Option<&Path>) -> Result<Instance> {
        let n = self.n;
        let cov = match (&self.cov, &self.cov_file) {
            (Some(d), None) => to_matrix(d, n, n, "C")?,
            (None, Some(f)) => {
                let p = match base {
                    Some(b) => b.join(f),
                    None => Path::new(f).to_path_buf(),
                };
                let m = read_matrix_file(&p)?;
                if m.nrows() != n {
                    return Err(parse_err(format!("{} is {}x{}, expected n = {n}", p.display(), m.nrows(), m.ncols())));
                }
                m
            }
            _ => return Err(parse_err("exactly one of C or C_file must be given")),
        };
        let b: Vector = Vector::from_vec(self.b.unwrap_or_default());
        let a = match &self.a {
            Some(d) => to_matrix(d, b.len(), n, "A")?,
            None if b.is_empty() => Mat::zeros(0, n),
            None => return Err(parse_err("b given without A")),
        };
        let vec_or = |v: Option<Vec<f64>>, d: f64, name: &str| -> Result<Vector> {
            match v {
                Some(v) if v.len() == n => Ok(Vector::from_vec(v)),
                Some(v) => Err(parse_err(format!("{name} has length {}, expected {n}", v.len()))),
                None => Ok(Vector::from_element(n, d)),
            }
        };
        let lower = vec_or(self.l, 0.0, "l")?;
        let upper = vec_or(self.c, 1.0, "c")?;
        let inst = Instance { cov, s: self.s, t: self.t, a, b, lower, upper };
        inst.validate()?;
        Ok(inst)
    }
}

/// Parses a JSON instance from text.
pub fn parse_instance_json(text: &str, base: Option<&Path>) -> Result<Instance> {
    let file: InstanceFile = serde_json::from_str(text).map_err(|e| parse_err(e.to_string()))?;
    file.into_instance(base)
}

/// Loads an instance file (JSON).
pub fn load_instance(path: &Path) -> Result<Instance> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| parse_err(format!("{}: {e}", path.display())))?;
    parse_instance_json(&text, path.parent())
}

impl Instance {
    /// JSON text of the instance; floats use the shortest round-trip form.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&InstanceFile::from_instance(self)).expect("serializable")
    }
}

/// Reads a dense CSV (no header) or Matrix Market covariance file.
pub fn read_matrix_file(path: &Path) -> Result<Mat> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| parse_err(format!("{}: {e}", path.display())))?;
    if text.trim_start().starts_with("%%MatrixMarket") {
        parse_matrix_market(&text)
    } else {
        parse_csv_matrix(&text)
    }
}

/// Dense CSV without header.
pub fn parse_csv_matrix(text: &str) -> Result<Mat> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(e.to_string()))?;
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| parse_err(format!("bad number '{f}': {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(parse_err("CSV matrix must be square and non-empty"));
    }
    Ok(Mat::from_fn(n, n, |i, j| rows[i][j]))
}

/// Matrix Market text with header `matrix coordinate real symmetric` or
/// `matrix array real general`.
pub fn parse_matrix_market(text: &str) -> Result<Mat> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| parse_err("empty Matrix Market file"))?;
    let fields: Vec<String> = header.split_whitespace().map(|s| s.to_ascii_lowercase()).collect();
    let kind = fields.get(1..5).map(|f| f.join(" "));
    let coordinate = match kind.as_deref() {
        Some("matrix coordinate real symmetric") => true,
        Some("matrix array real general") => false,
        _ => return Err(parse_err(format!("unsupported Matrix Market header '{header}'"))),
    };
    let mut body = lines.filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('%'));
    let size: Vec<usize> = body
        .next()
        .ok_or_else(|| parse_err("missing size line"))?
        .split_whitespace()
        .map(|v| v.parse::<usize>().map_err(|e| parse_err(e.to_string())))
        .collect::<Result<_>>()?;
    let nums = |line: &str| -> Result<Vec<f64>> {
        line.split_whitespace()
            .map(|v| v.parse::<f64>().map_err(|e| parse_err(format!("bad number '{v}': {e}"))))
            .collect()
    };
    if coordinate {
        if size.len() != 3 || size[0] != size[1] {
            return Err(parse_err("coordinate size line must be 'n n nnz'"));
        }
        let n = size[0];
        let mut m = Mat::zeros(n, n);
        let mut count = 0;
        for line in body {
            let v = nums(line)?;
            if v.len() != 3 {
                return Err(parse_err(format!("bad entry line '{line}'")));
            }
            let (i, j) = (v[0] as usize, v[1] as usize);
            if i == 0 || j == 0 || i > n || j > n {
                return Err(parse_err(format!("index out of range in '{line}'")));
            }
            m[(i - 1, j - 1)] = v[2];
            m[(j - 1, i - 1)] = v[2];
            count += 1;
        }
        if count != size[2] {
            return Err(parse_err(format!("expected {} entries, found {count}", size[2])));
        }
        Ok(m)
    } else {
        if size.len() != 2 || size[0] != size[1] {
            return Err(parse_err("array size line must be 'n n'"));
        }
        let n = size[0];
        let vals: Vec<f64> = body.map(nums).collect::<Result<Vec<_>>>()?.concat();
        if vals.len() != n * n {
            return Err(parse_err(format!("expected {} values, found {}", n * n, vals.len())));
        }
        // array format is column-major
        Ok(Mat::from_column_slice(n, n, &vals))
    }
}
