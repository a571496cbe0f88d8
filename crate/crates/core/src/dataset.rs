//! Tabular ingestion: delimited text in, an all-numeric matrix out.
//!
//! Every input column becomes exactly one numeric coordinate. Categorical
//! labels are ordinal-encoded by first appearance; ties are left in place
//! because the rank transform breaks them by row order.

use std::collections::{HashMap, HashSet};
use std::io::Read;

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_id, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    Ordinal,
    Categorical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    /// Labels in code order: `encoding[c]` is the label stored as `c`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub encoding: Option<Vec<String>>,
}

impl ColumnSpec {
    pub fn code_of(&self, label: &str) -> Option<usize> {
        self.encoding.as_ref()?.iter().position(|l| l == label)
    }

    /// Label for an encoded value, if the column carries an encoding.
    pub fn decode(&self, code: f64) -> Option<&str> {
        let levels = self.encoding.as_ref()?;
        if code < 0.0 || code.fract() != 0.0 {
            return None;
        }
        levels.get(code as usize).map(String::as_str)
    }
}

/// A fully numeric table with one coordinate per column and no missing values.
#[derive(Clone, Debug)]
pub struct Dataset {
    columns: Vec<ColumnSpec>,
    values: Array2<f64>,
    dropped_rows: usize,
}

impl Dataset {
    pub fn new(columns: Vec<ColumnSpec>, values: Array2<f64>) -> Result<Self> {
        if values.ncols() != columns.len() {
            return Err(Error::DimensionMismatch {
                expected: columns.len(),
                got: values.ncols(),
            });
        }
        if columns.is_empty() {
            return Err(Error::EmptyTable);
        }
        if values.nrows() < 2 {
            return Err(Error::TooFewRows {
                needed: 2,
                got: values.nrows(),
            });
        }
        Ok(Self {
            columns,
            values,
            dropped_rows: 0,
        })
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn d(&self) -> usize {
        self.values.ncols()
    }

    /// Rows discarded at ingestion because a cell was empty.
    pub fn dropped_rows(&self) -> usize {
        self.dropped_rows
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn column(&self, name: &str) -> Result<ArrayView1<'_, f64>> {
        Ok(self.values.column(self.column_index(name)?))
    }

    /// Sub-matrix with the named columns, in the given order.
    pub fn select<S: AsRef<str>>(&self, names: &[S]) -> Result<Array2<f64>> {
        let idx = names
            .iter()
            .map(|n| self.column_index(n.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.values.select(Axis(1), &idx))
    }

    /// Names of every column not listed in `exclude`.
    pub fn other_columns<S: AsRef<str>>(&self, exclude: &[S]) -> Vec<String> {
        self.columns
            .iter()
            .filter(|c| !exclude.iter().any(|e| e.as_ref() == c.name))
            .map(|c| c.name.clone())
            .collect()
    }

    /// Adds seeded Gaussian jitter to every ordinal and categorical column.
    /// The noise scale is `relative_sigma` times the column's standard deviation.
    pub fn with_jitter(mut self, relative_sigma: f64, seed: u64) -> Result<Self> {
        if !(relative_sigma > 0.0) || !relative_sigma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "jitter scale must be positive, got {relative_sigma}"
            )));
        }
        for (j, spec) in self.columns.iter().enumerate() {
            if spec.kind == ColumnKind::Continuous {
                continue;
            }
            let mut col = self.values.column_mut(j);
            let mut buf = col.to_vec();
            jitter(&mut buf, relative_sigma, seed, j as u64);
            col.assign(&ArrayView1::from(&buf));
        }
        Ok(self)
    }
}

/// Adds `N(0, (relative_sigma * sd)^2)` noise drawn from the stream `(seed, column)`.
pub fn jitter(values: &mut [f64], relative_sigma: f64, seed: u64, column: u64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
    let mut stream = Stream::new(seed, stream_id(&[0x4A17, column]));
    for v in values.iter_mut() {
        *v += relative_sigma * scale * stream.normal();
    }
}

#[derive(Clone, Debug)]
pub struct LoadOptions {
    pub delimiter: u8,
    /// Columns forced to categorical regardless of inference.
    pub categorical: Vec<String>,
    /// Columns forced to ordinal regardless of inference.
    pub ordinal: Vec<String>,
    /// Columns forced to continuous; they must parse as numbers.
    pub continuous: Vec<String>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            categorical: Vec::new(),
            ordinal: Vec::new(),
            continuous: Vec::new(),
        }
    }
}

/// Result of encoding one raw column.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedColumn {
    pub values: Vec<f64>,
    pub encoding: Option<Vec<String>>,
}

/// Maps a raw column to one numeric coordinate.
///
/// Ordinal columns that parse as numbers pass through unchanged; anything else
/// non-continuous gets integer codes in order of first appearance.
pub fn encode_categorical<S: AsRef<str>>(raw: &[S], kind: ColumnKind) -> Result<EncodedColumn> {
    let numeric = parse_all(raw);
    match (kind, numeric) {
        (ColumnKind::Continuous, Some(values)) | (ColumnKind::Ordinal, Some(values)) => {
            Ok(EncodedColumn {
                values,
                encoding: None,
            })
        }
        (ColumnKind::Continuous, None) => Err(Error::NonNumericColumn(String::new())),
        _ => {
            let mut codes: HashMap<&str, usize> = HashMap::new();
            let mut levels = Vec::new();
            let values = raw
                .iter()
                .map(|s| {
                    let s = s.as_ref().trim();
                    let next = levels.len();
                    let code = *codes.entry(s).or_insert_with(|| {
                        levels.push(s.to_string());
                        next
                    });
                    code as f64
                })
                .collect();
            Ok(EncodedColumn {
                values,
                encoding: Some(levels),
            })
        }
    }
}

fn parse_all<S: AsRef<str>>(raw: &[S]) -> Option<Vec<f64>> {
    raw.iter()
        .map(|s| s.as_ref().trim().parse::<f64>().ok().filter(|v| v.is_finite()))
        .collect()
}

/// Inference rule for a column with no override.
pub fn infer_kind<S: AsRef<str>>(raw: &[S]) -> ColumnKind {
    let Some(values) = parse_all(raw) else {
        return ColumnKind::Categorical;
    };
    if values.iter().all(|v| v.fract() == 0.0) {
        let distinct: HashSet<i64> = values.iter().map(|&v| v as i64).collect();
        let threshold = 20.min(values.len() / 10);
        if distinct.len() <= threshold {
            return ColumnKind::Ordinal;
        }
    }
    ColumnKind::Continuous
}

/// Reads a delimited table with a header row into a [`Dataset`].
///
/// Rows with an empty cell are dropped and counted.
pub fn load_table<R: Read>(source: R, options: &LoadOptions) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(true)
        .flexible(false)
        .from_reader(source);
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::MalformedRow {
            row: 0,
            message: e.to_string(),
        })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(Error::EmptyTable);
    }
    for name in options
        .categorical
        .iter()
        .chain(&options.ordinal)
        .chain(&options.continuous)
    {
        if !headers.contains(name) {
            return Err(Error::UnknownColumn(name.clone()));
        }
    }

    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut seen = 0usize;
    let mut dropped = 0usize;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::MalformedRow {
            row: i + 1,
            message: e.to_string(),
        })?;
        seen += 1;
        if record.iter().any(|cell| cell.trim().is_empty()) {
            dropped += 1;
            continue;
        }
        rows.push(record.iter().map(|c| c.trim().to_string()).collect());
    }
    if seen == 0 {
        return Err(Error::EmptyTable);
    }
    if rows.len() < 2 {
        return Err(Error::TooFewRows {
            needed: 2,
            got: rows.len(),
        });
    }

    let n = rows.len();
    let d = headers.len();
    let mut values = Array2::<f64>::zeros((n, d));
    let mut columns = Vec::with_capacity(d);
    for (j, name) in headers.iter().enumerate() {
        let raw: Vec<&str> = rows.iter().map(|r| r[j].as_str()).collect();
        let kind = if options.categorical.contains(name) {
            ColumnKind::Categorical
        } else if options.ordinal.contains(name) {
            ColumnKind::Ordinal
        } else if options.continuous.contains(name) {
            ColumnKind::Continuous
        } else {
            infer_kind(&raw)
        };
        let encoded = encode_categorical(&raw, kind).map_err(|e| match e {
            Error::NonNumericColumn(_) => Error::NonNumericColumn(name.clone()),
            other => other,
        })?;
        values
            .column_mut(j)
            .assign(&ArrayView1::from(&encoded.values));
        columns.push(ColumnSpec {
            name: name.clone(),
            kind,
            encoding: encoded.encoding,
        });
    }
    let mut ds = Dataset::new(columns, values)?;
    ds.dropped_rows = dropped;
    Ok(ds)
}
