//! Typed tabular datasets.
//!
//! A [`Dataset`] is an ordered list of rows over a [`Schema`]. Every cell is
//! stored as an `f64`: continuous columns hold the value itself, categorical
//! columns hold the index of the label in the column's support. Row equality
//! for exact-match purposes goes through [`canonical`] rounding (12 decimal
//! digits), exposed as [`RecordKey`].

mod csvio;
mod discretize;
mod generate;
mod outliers;

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub use csvio::{parse_csv, read_csv, render_csv, write_csv};
pub use discretize::{BinStrategy, Discretizer};
pub use generate::{gen_censuslite, gen_gauss, gen_gauss_grid, CENSUSLITE_CARDINALITIES, GAUSS_BOUND};
pub(crate) use generate::{gauss_row, gauss_schema as generate_schema_gauss};
pub use outliers::{label_outliers, OutlierRule, OutlierSet};

/// One row; see the module docs for the cell encoding.
pub type Record = Vec<f64>;

/// Rounds to 12 decimal digits, normalizing `-0.0` to `0.0`.
pub fn canonical(x: f64) -> f64 {
    let r = (x * 1e12).round() / 1e12;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// Hashable canonical encoding of a record.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RecordKey(Vec<u64>);

impl RecordKey {
    pub fn of(row: &[f64]) -> Self {
        RecordKey(row.iter().map(|&x| canonical(x).to_bits()).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnKind {
    Categorical { support: Vec<String> },
    Continuous { min: f64, max: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    #[serde(flatten)]
    pub kind: ColumnKind,
}

impl ColumnSchema {
    pub fn categorical<S: Into<String>>(name: &str, support: impl IntoIterator<Item = S>) -> Self {
        ColumnSchema {
            name: name.to_string(),
            kind: ColumnKind::Categorical {
                support: support.into_iter().map(Into::into).collect(),
            },
        }
    }

    pub fn continuous(name: &str, min: f64, max: f64) -> Self {
        ColumnSchema {
            name: name.to_string(),
            kind: ColumnKind::Continuous { min, max },
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, ColumnKind::Categorical { .. })
    }

    /// Number of categories, `None` for continuous columns.
    pub fn cardinality(&self) -> Option<usize> {
        match &self.kind {
            ColumnKind::Categorical { support } => Some(support.len()),
            ColumnKind::Continuous { .. } => None,
        }
    }

    fn validate(&self) -> Result<()> {
        match &self.kind {
            ColumnKind::Categorical { support } => {
                if support.is_empty() {
                    return Err(Error::Schema(format!("column `{}` has an empty support", self.name)));
                }
                let mut seen = HashSet::new();
                for label in support {
                    if !seen.insert(label.as_str()) {
                        return Err(Error::Schema(format!(
                            "column `{}` repeats category `{label}`",
                            self.name
                        )));
                    }
                }
            }
            ColumnKind::Continuous { min, max } => {
                if !(min.is_finite() && max.is_finite() && min < max) {
                    return Err(Error::Schema(format!(
                        "column `{}` needs finite min < max, got [{min}, {max}]",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }

    fn check(&self, v: f64) -> std::result::Result<(), String> {
        match &self.kind {
            ColumnKind::Categorical { support } => {
                if v.fract() != 0.0 || v < 0.0 || v as usize >= support.len() {
                    Err(format!("category code {v} outside support of size {}", support.len()))
                } else {
                    Ok(())
                }
            }
            ColumnKind::Continuous { min, max } => {
                if v.is_nan() || v < *min || v > *max {
                    Err(format!("value {v} outside [{min}, {max}]"))
                } else {
                    Ok(())
                }
            }
        }
    }
}

/// Ordered list of column definitions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ColumnSchema>", into = "Vec<ColumnSchema>")]
pub struct Schema {
    columns: Vec<ColumnSchema>,
}

impl Schema {
    pub fn new(columns: Vec<ColumnSchema>) -> Result<Self> {
        let mut names = HashSet::new();
        for c in &columns {
            c.validate()?;
            if !names.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column name `{}`", c.name)));
            }
        }
        Ok(Schema { columns })
    }

    pub fn columns(&self) -> &[ColumnSchema] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn all_categorical(&self) -> bool {
        self.columns.iter().all(ColumnSchema::is_categorical)
    }

    pub fn all_continuous(&self) -> bool {
        self.columns.iter().all(|c| !c.is_categorical())
    }

    /// Checks a row against the schema, reporting the first offending column.
    pub fn check_row(&self, row: &[f64]) -> std::result::Result<(), (usize, String)> {
        if row.len() != self.columns.len() {
            return Err((row.len().min(self.columns.len()), format!(
                "expected {} values, got {}",
                self.columns.len(),
                row.len()
            )));
        }
        for (j, (c, &v)) in self.columns.iter().zip(row).enumerate() {
            c.check(v).map_err(|e| (j, e))?;
        }
        Ok(())
    }

    /// Converts a cell to its external representation.
    pub fn render(&self, column: usize, v: f64) -> WireValue {
        match &self.columns[column].kind {
            ColumnKind::Categorical { support } => WireValue::Label(support[v as usize].clone()),
            ColumnKind::Continuous { .. } => WireValue::Number(v),
        }
    }

    /// Converts an external cell back to the internal encoding.
    pub fn encode(&self, column: usize, v: &WireValue) -> std::result::Result<f64, String> {
        let col = self
            .columns
            .get(column)
            .ok_or_else(|| format!("no column at index {column}"))?;
        match (&col.kind, v) {
            (ColumnKind::Categorical { support }, WireValue::Label(s)) => support
                .iter()
                .position(|l| l == s)
                .map(|i| i as f64)
                .ok_or_else(|| format!("`{s}` is not a category of `{}`", col.name)),
            (ColumnKind::Continuous { .. }, WireValue::Number(x)) => {
                col.check(*x)?;
                Ok(*x)
            }
            (ColumnKind::Categorical { .. }, WireValue::Number(_)) => {
                Err(format!("column `{}` expects a category label", col.name))
            }
            (ColumnKind::Continuous { .. }, WireValue::Label(_)) => {
                Err(format!("column `{}` expects a number", col.name))
            }
        }
    }
}

impl TryFrom<Vec<ColumnSchema>> for Schema {
    type Error = Error;

    fn try_from(columns: Vec<ColumnSchema>) -> Result<Self> {
        Schema::new(columns)
    }
}

impl From<Schema> for Vec<ColumnSchema> {
    fn from(s: Schema) -> Self {
        s.columns
    }
}

/// A cell as exchanged with the outside world: labels for categorical
/// columns, numbers for continuous ones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WireValue {
    Number(f64),
    Label(String),
}

impl fmt::Display for WireValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WireValue::Number(x) => write!(f, "{x}"),
            WireValue::Label(s) => f.write_str(s),
        }
    }
}

/// An immutable, schema-checked table.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    schema: Arc<Schema>,
    records: Vec<Record>,
    provenance: String,
}

impl Dataset {
    pub fn new(schema: Arc<Schema>, records: Vec<Record>, provenance: impl Into<String>) -> Result<Self> {
        for (i, row) in records.iter().enumerate() {
            schema
                .check_row(row)
                .map_err(|(column, reason)| Error::OutOfSchema { row: i, column, reason })?;
        }
        Ok(Dataset {
            schema,
            records,
            provenance: provenance.into(),
        })
    }

    /// Builds a dataset from rows already known to satisfy the schema,
    /// e.g. rows copied out of another dataset with the same schema.
    pub(crate) fn from_checked(schema: Arc<Schema>, records: Vec<Record>, provenance: impl Into<String>) -> Self {
        debug_assert!(records.iter().all(|r| schema.check_row(r).is_ok()));
        Dataset {
            schema,
            records,
            provenance: provenance.into(),
        }
    }

    pub fn empty(schema: Arc<Schema>, provenance: impl Into<String>) -> Self {
        Dataset::from_checked(schema, Vec::new(), provenance)
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn schema_arc(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn into_records(self) -> Vec<Record> {
        self.records
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = provenance.into();
        self
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_cols(&self) -> usize {
        self.schema.len()
    }

    /// Rows at the given indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let rows = indices.iter().map(|&i| self.records[i].clone()).collect();
        Dataset::from_checked(self.schema.clone(), rows, self.provenance.clone())
    }

    /// Rows for which `keep` returns true, order preserved.
    pub fn filter(&self, mut keep: impl FnMut(usize, &Record) -> bool) -> Dataset {
        let rows = self
            .records
            .iter()
            .enumerate()
            .filter(|(i, r)| keep(*i, r))
            .map(|(_, r)| r.clone())
            .collect();
        Dataset::from_checked(self.schema.clone(), rows, self.provenance.clone())
    }

    /// Concatenation; schemas must be equal.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        self.ensure_same_schema(other)?;
        let mut rows = self.records.clone();
        rows.extend(other.records.iter().cloned());
        Ok(Dataset::from_checked(self.schema.clone(), rows, self.provenance.clone()))
    }

    /// Appends rows after checking them against the schema.
    pub fn extended(&self, rows: impl IntoIterator<Item = Record>) -> Result<Dataset> {
        let mut all = self.records.clone();
        let start = all.len();
        for (k, row) in rows.into_iter().enumerate() {
            self.schema
                .check_row(&row)
                .map_err(|(column, reason)| Error::OutOfSchema { row: start + k, column, reason })?;
            all.push(row);
        }
        Ok(Dataset::from_checked(self.schema.clone(), all, self.provenance.clone()))
    }

    pub fn ensure_same_schema(&self, other: &Dataset) -> Result<()> {
        if Arc::ptr_eq(&self.schema, &other.schema) || *self.schema == *other.schema {
            Ok(())
        } else {
            Err(Error::SchemaMismatch(format!(
                "`{}` and `{}` have different schemas",
                self.provenance, other.provenance
            )))
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = RecordKey> + '_ {
        self.records.iter().map(|r| RecordKey::of(r))
    }

    /// External representation of one row.
    pub fn render_row(&self, i: usize) -> Vec<WireValue> {
        render_record(&self.schema, &self.records[i])
    }
}

pub fn render_record(schema: &Schema, row: &[f64]) -> Vec<WireValue> {
    row.iter().enumerate().map(|(j, &v)| schema.render(j, v)).collect()
}

/// Splits an even-sized dataset into two disjoint halves of equal size.
pub fn split(ds: &Dataset, seed: u64) -> Result<(Dataset, Dataset)> {
    if !ds.len().is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "cannot split {} rows into equal halves",
            ds.len()
        )));
    }
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    idx.shuffle(&mut seed::rng(seed));
    let half = ds.len() / 2;
    let train = ds.select(&idx[..half]).with_provenance(format!("{}/train", ds.provenance));
    let test = ds.select(&idx[half..]).with_provenance(format!("{}/test", ds.provenance));
    Ok((train, test))
}
