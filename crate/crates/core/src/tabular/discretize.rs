use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{ColumnKind, ColumnSchema, Dataset, Schema};
use crate::error::{Error, Result};
use crate::metrics::percentile;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinStrategy {
    Uniform,
    Quantile,
}

/// Per-column binning of continuous columns. Categorical columns pass through.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discretizer {
    pub strategy: BinStrategy,
    pub n_bins: usize,
    /// Interior edges per column (`None` for categorical columns), strictly
    /// increasing. A value `x` goes to the bin counting the edges `< x`, so a
    /// value on an edge lands in the lower bin.
    pub edges: Vec<Option<Vec<f64>>>,
    source: Schema,
}

impl Discretizer {
    pub fn fit(ds: &Dataset, strategy: BinStrategy, n_bins: usize) -> Result<Self> {
        if n_bins < 2 {
            return Err(Error::InvalidArgument(format!("n_bins must be at least 2, got {n_bins}")));
        }
        if ds.schema().all_categorical() {
            return Err(Error::InvalidArgument("no continuous columns to discretize".into()));
        }
        if ds.is_empty() {
            return Err(Error::TooFewRows { needed: 1, got: 0 });
        }
        let edges = ds
            .schema()
            .columns()
            .iter()
            .enumerate()
            .map(|(j, col)| {
                if col.is_categorical() {
                    return None;
                }
                let mut xs: Vec<f64> = ds.records().iter().map(|r| r[j]).collect();
                xs.sort_by(f64::total_cmp);
                let raw: Vec<f64> = match strategy {
                    BinStrategy::Uniform => {
                        let (lo, hi) = (xs[0], xs[xs.len() - 1]);
                        let w = (hi - lo) / n_bins as f64;
                        (1..n_bins).map(|b| lo + w * b as f64).collect()
                    }
                    BinStrategy::Quantile => (1..n_bins)
                        .map(|b| percentile(&xs, 100.0 * b as f64 / n_bins as f64))
                        .collect(),
                };
                let mut e: Vec<f64> = Vec::with_capacity(raw.len());
                for x in raw {
                    if e.last().is_none_or(|&l| x > l) {
                        e.push(x);
                    }
                }
                Some(e)
            })
            .collect();
        Ok(Discretizer {
            strategy,
            n_bins,
            edges,
            source: ds.schema().clone(),
        })
    }

    pub fn bin(&self, column: usize, x: f64) -> usize {
        let edges = self.edges[column].as_ref().expect("continuous column");
        edges.partition_point(|&e| e < x)
    }

    pub fn output_schema(&self) -> Schema {
        let labels: Vec<String> = (0..self.n_bins).map(|b| format!("b{b}")).collect();
        let cols = self
            .source
            .columns()
            .iter()
            .map(|c| match c.kind {
                ColumnKind::Continuous { .. } => ColumnSchema::categorical(&c.name, labels.clone()),
                ColumnKind::Categorical { .. } => c.clone(),
            })
            .collect();
        Schema::new(cols).expect("derived from a valid schema")
    }

    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        if *ds.schema() != self.source {
            return Err(Error::SchemaMismatch("dataset does not match the fitted schema".into()));
        }
        let rows = ds
            .records()
            .iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .map(|(j, &x)| match self.edges[j] {
                        Some(_) => self.bin(j, x) as f64,
                        None => x,
                    })
                    .collect()
            })
            .collect();
        Ok(Dataset::from_checked(
            Arc::new(self.output_schema()),
            rows,
            format!("{}/{:?}{}", ds.provenance(), self.strategy, self.n_bins),
        ))
    }
}
