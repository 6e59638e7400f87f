//! Hypothesis tables: CSV ingestion, validation and covariate standardization.
//!
//! A table holds one row per hypothesis: the test statistic `z`, the
//! test-level covariates `X` (n×k), the auxiliary covariates `Xa` (n×q, q may
//! be zero), an optional 0/1 truth label and a unique row identifier.

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a block of covariate columns is located in the CSV header.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Columns {
    /// All columns named `<prefix>0`, `<prefix>1`, ... (must be contiguous from 0).
    Prefix(String),
    /// Exactly these columns, in this order.
    Names(Vec<String>),
}

/// Column-name configuration for [`load_table`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schema {
    pub z: String,
    pub x: Columns,
    pub a: Columns,
    /// Truth column; used when present in the header.
    pub h: String,
    /// Fail with a schema error when the truth column is absent.
    pub require_truth: bool,
    /// Identifier column; row indices are used when it is absent.
    pub id: String,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            z: "z".into(),
            x: Columns::Prefix("x".into()),
            a: Columns::Prefix("a".into()),
            h: "h".into(),
            require_truth: false,
            id: "id".into(),
        }
    }
}

/// Per-column affine scaling recorded by [`standardize_covariates`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub x_mean: Vec<f64>,
    pub x_scale: Vec<f64>,
    pub xa_mean: Vec<f64>,
    pub xa_scale: Vec<f64>,
}

impl Scaling {
    /// Applies the recorded shift/scale to another table with the same layout.
    pub fn apply(&self, table: &HypothesisTable) -> Result<HypothesisTable> {
        if table.k() != self.x_mean.len() || table.q() != self.xa_mean.len() {
            return Err(Error::Shape(format!(
                "scaling expects k={}, q={} but table has k={}, q={}",
                self.x_mean.len(),
                self.xa_mean.len(),
                table.k(),
                table.q()
            )));
        }
        let mut out = table.clone();
        scale_in_place(&mut out.x, &self.x_mean, &self.x_scale);
        scale_in_place(&mut out.xa, &self.xa_mean, &self.xa_scale);
        Ok(out)
    }
}

fn scale_in_place(m: &mut Array2<f64>, mean: &[f64], scale: &[f64]) {
    for (j, mut col) in m.axis_iter_mut(Axis(1)).enumerate() {
        col.mapv_inplace(|v| (v - mean[j]) / scale[j]);
    }
}

/// A validated set of hypotheses.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisTable {
    ids: Vec<String>,
    z: Vec<f64>,
    x: Array2<f64>,
    xa: Array2<f64>,
    truth: Option<Vec<u8>>,
    x_names: Vec<String>,
    xa_names: Vec<String>,
}

impl HypothesisTable {
    /// Builds a table with default column names `x0..`, `a0..`, checking
    /// every invariant.
    pub fn new(
        ids: Vec<String>,
        z: Vec<f64>,
        x: Array2<f64>,
        xa: Array2<f64>,
        truth: Option<Vec<u8>>,
    ) -> Result<Self> {
        let x_names = (0..x.ncols()).map(|j| format!("x{j}")).collect();
        let xa_names = (0..xa.ncols()).map(|j| format!("a{j}")).collect();
        Self::with_names(ids, z, x, xa, truth, x_names, xa_names)
    }

    pub fn with_names(
        ids: Vec<String>,
        z: Vec<f64>,
        x: Array2<f64>,
        xa: Array2<f64>,
        truth: Option<Vec<u8>>,
        x_names: Vec<String>,
        xa_names: Vec<String>,
    ) -> Result<Self> {
        let n = z.len();
        if n == 0 {
            return Err(Error::Validation("table has no rows".into()));
        }
        if x.ncols() == 0 {
            return Err(Error::Validation("at least one test-level covariate is required".into()));
        }
        if x.nrows() != n || xa.nrows() != n || ids.len() != n {
            return Err(Error::Shape(format!(
                "row counts disagree: z={n}, X={}, Xa={}, ids={}",
                x.nrows(),
                xa.nrows(),
                ids.len()
            )));
        }
        if x_names.len() != x.ncols() || xa_names.len() != xa.ncols() {
            return Err(Error::Shape("column names do not match matrix widths".into()));
        }
        if let Some(i) = z.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("z is not finite in row {}", ids[i])));
        }
        if let Some(((i, _), _)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Validation(format!("non-finite X entry in row {}", ids[i])));
        }
        if let Some(((i, _), _)) = xa.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Validation(format!("non-finite Xa entry in row {}", ids[i])));
        }
        if let Some(h) = &truth {
            if h.len() != n {
                return Err(Error::Shape(format!("truth has {} entries, expected {n}", h.len())));
            }
            if let Some(i) = h.iter().position(|&v| v > 1) {
                return Err(Error::Validation(format!(
                    "h value {} outside {{0,1}} in row {}",
                    h[i], ids[i]
                )));
            }
        }
        let mut seen = HashSet::with_capacity(n);
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::Validation(format!("duplicate id {id:?}")));
            }
        }
        Ok(HypothesisTable {
            ids,
            z,
            x,
            xa,
            truth,
            x_names,
            xa_names,
        })
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }

    pub fn k(&self) -> usize {
        self.x.ncols()
    }

    pub fn q(&self) -> usize {
        self.xa.ncols()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn xa(&self) -> ArrayView2<'_, f64> {
        self.xa.view()
    }

    pub fn truth(&self) -> Option<&[u8]> {
        self.truth.as_deref()
    }

    pub fn x_names(&self) -> &[String] {
        &self.x_names
    }

    pub fn xa_names(&self) -> &[String] {
        &self.xa_names
    }

    /// `[X, Xa]` stacked column-wise.
    pub fn stacked_covariates(&self) -> Array2<f64> {
        ndarray::concatenate(Axis(1), &[self.x.view(), self.xa.view()])
            .expect("row counts validated at construction")
    }
}

/// Reads a table from a CSV file.
pub fn load_table(path: impl AsRef<Path>, schema: &Schema) -> Result<HypothesisTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_table(file, schema)
}

/// Reads a table from any CSV source.
pub fn read_table<R: Read>(reader: R, schema: &Schema) -> Result<HypothesisTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let find = |name: &str| header.iter().position(|h| h == name);

    let z_col = find(&schema.z).ok_or_else(|| Error::Schema {
        column: schema.z.clone(),
    })?;
    let x_cols = resolve_columns(&header, &schema.x, true)?;
    let a_cols = resolve_columns(&header, &schema.a, false)?;
    let h_col = find(&schema.h);
    if h_col.is_none() && schema.require_truth {
        return Err(Error::Schema {
            column: schema.h.clone(),
        });
    }
    let id_col = find(&schema.id);

    let (k, q) = (x_cols.len(), a_cols.len());
    let mut ids = Vec::new();
    let mut z = Vec::new();
    let mut x = Vec::new();
    let mut xa = Vec::new();
    let mut truth = h_col.map(|_| Vec::new());

    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let row = row + 1;
        let cell = |c: usize| -> Result<f64> { parse_cell(&record, c, &header, row) };
        z.push(cell(z_col)?);
        for &c in &x_cols {
            x.push(cell(c)?);
        }
        for &c in &a_cols {
            xa.push(cell(c)?);
        }
        if let (Some(c), Some(h)) = (h_col, truth.as_mut()) {
            let v = cell(c)?;
            if v != 0.0 && v != 1.0 {
                return Err(Error::Validation(format!(
                    "h value {v} outside {{0,1}} at row {row}"
                )));
            }
            h.push(v as u8);
        }
        ids.push(match id_col {
            Some(c) => record.get(c).unwrap_or_default().to_owned(),
            None => (row - 1).to_string(),
        });
    }

    let n = z.len();
    let x = Array2::from_shape_vec((n, k), x).expect("row-major fill matches shape");
    let xa = Array2::from_shape_vec((n, q), xa).expect("row-major fill matches shape");
    let names = |cols: &[usize]| cols.iter().map(|&c| header[c].clone()).collect();
    HypothesisTable::with_names(ids, z, x, xa, truth, names(&x_cols), names(&a_cols))
}

fn parse_cell(record: &csv::StringRecord, col: usize, header: &[String], row: usize) -> Result<f64> {
    let raw = record.get(col).unwrap_or("");
    let err = |message: String| Error::Parse {
        row,
        column: header[col].clone(),
        message,
    };
    if raw.is_empty() {
        return Err(err("missing value".into()));
    }
    let v: f64 = raw
        .parse()
        .map_err(|_| err(format!("not a number: {raw:?}")))?;
    if !v.is_finite() {
        return Err(err(format!("non-finite value {raw:?}")));
    }
    Ok(v)
}

fn resolve_columns(header: &[String], spec: &Columns, required: bool) -> Result<Vec<usize>> {
    match spec {
        Columns::Names(names) => names
            .iter()
            .map(|name| {
                header
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| Error::Schema { column: name.clone() })
            })
            .collect(),
        Columns::Prefix(prefix) => {
            let mut found: Vec<(usize, usize)> = header
                .iter()
                .enumerate()
                .filter_map(|(c, h)| {
                    let rest = h.strip_prefix(prefix.as_str())?;
                    if rest.is_empty() || !rest.bytes().all(|b| b.is_ascii_digit()) {
                        return None;
                    }
                    rest.parse::<usize>().ok().map(|j| (j, c))
                })
                .collect();
            found.sort_unstable();
            for (expected, &(j, _)) in found.iter().enumerate() {
                if j != expected {
                    return Err(Error::Schema {
                        column: format!("{prefix}{expected}"),
                    });
                }
            }
            if required && found.is_empty() {
                return Err(Error::Schema {
                    column: format!("{prefix}0"),
                });
            }
            Ok(found.into_iter().map(|(_, c)| c).collect())
        }
    }
}

/// Writes a table as CSV: `id,z,<x columns>,<a columns>[,h]`.
pub fn write_table(table: &HypothesisTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_table_to(table, file)
}

pub fn write_table_to<W: Write>(table: &HypothesisTable, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_owned(), "z".to_owned()];
    header.extend(table.x_names.iter().cloned());
    header.extend(table.xa_names.iter().cloned());
    if table.truth.is_some() {
        header.push("h".into());
    }
    wtr.write_record(&header)?;
    let mut rec = Vec::with_capacity(header.len());
    for i in 0..table.n() {
        rec.clear();
        rec.push(table.ids[i].clone());
        rec.push(fmt_f64(table.z[i]));
        rec.extend(table.x.row(i).iter().map(|&v| fmt_f64(v)));
        rec.extend(table.xa.row(i).iter().map(|&v| fmt_f64(v)));
        if let Some(h) = &table.truth {
            rec.push(h[i].to_string());
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Shortest representation that parses back to the same `f64`.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Shifts and scales every covariate column to sample mean 0 and sample
/// standard deviation 1 (denominator n − 1). Constant columns are only shifted.
pub fn standardize_covariates(table: &HypothesisTable) -> Result<(HypothesisTable, Scaling)> {
    if table.n() < 2 {
        return Err(Error::InsufficientData(
            "standardization needs at least 2 rows".into(),
        ));
    }
    let (x_mean, x_scale) = column_moments(&table.x);
    let (xa_mean, xa_scale) = column_moments(&table.xa);
    let scaling = Scaling {
        x_mean,
        x_scale,
        xa_mean,
        xa_scale,
    };
    let out = scaling.apply(table)?;
    Ok((out, scaling))
}

fn column_moments(m: &Array2<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = m.nrows() as f64;
    let mut means = Vec::with_capacity(m.ncols());
    let mut scales = Vec::with_capacity(m.ncols());
    for col in m.axis_iter(Axis(1)) {
        let mean = col.sum() / n;
        let ss: f64 = col.iter().map(|v| (v - mean).powi(2)).sum();
        let sd = (ss / (n - 1.0)).sqrt();
        // Rounding can leave a tiny spread on an exactly constant column.
        let constant = sd <= 1e-12 * mean.abs().max(1.0);
        means.push(mean);
        scales.push(if constant { 1.0 } else { sd });
    }
    (means, scales)
}
