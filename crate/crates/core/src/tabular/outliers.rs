use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{ColumnKind, Dataset};
use crate::error::{Error, Result};
use crate::mixture::{cluster_sizes, fit_gmm, smallest_clusters};

/// How outliers are identified.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum OutlierRule {
    /// Rows whose Euclidean norm exceeds `r` (continuous data only).
    Radius { r: f64 },
    /// Rows in the smallest mixture clusters whose combined size fits `budget`.
    GmmSmallest { k: usize, budget: usize, seed: u64 },
    /// Rows whose `column` holds the category `label`.
    DesignatedClass { column: String, label: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutlierSet {
    pub indices: BTreeSet<usize>,
    pub rule: OutlierRule,
}

impl OutlierSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn rows(&self, ds: &Dataset) -> Dataset {
        ds.select(&self.indices.iter().copied().collect::<Vec<_>>())
    }
}

const GMM_MAX_ITERS: usize = 200;
const GMM_TOL: f64 = 1e-6;

pub fn label_outliers(ds: &Dataset, rule: &OutlierRule) -> Result<OutlierSet> {
    let indices = match rule {
        OutlierRule::Radius { r } => {
            if !ds.schema().all_continuous() {
                return Err(Error::InvalidArgument(
                    "the radius rule needs all-continuous data".into(),
                ));
            }
            ds.records()
                .iter()
                .enumerate()
                .filter(|(_, row)| row.iter().map(|x| x * x).sum::<f64>().sqrt() > *r)
                .map(|(i, _)| i)
                .collect()
        }
        OutlierRule::GmmSmallest { k, budget, seed } => {
            let gmm = fit_gmm(ds, *k, GMM_MAX_ITERS, GMM_TOL, *seed)?;
            let chosen = smallest_clusters(&cluster_sizes(&gmm.fit_labels, *k), *budget);
            gmm.fit_labels
                .iter()
                .enumerate()
                .filter(|(_, l)| chosen.contains(l))
                .map(|(i, _)| i)
                .collect()
        }
        OutlierRule::DesignatedClass { column, label } => {
            let (j, col) = ds
                .schema()
                .columns()
                .iter()
                .enumerate()
                .find(|(_, c)| &c.name == column)
                .ok_or_else(|| Error::InvalidArgument(format!("no column named `{column}`")))?;
            let code = match &col.kind {
                ColumnKind::Categorical { support } => support
                    .iter()
                    .position(|s| s == label)
                    .ok_or_else(|| Error::InvalidArgument(format!("`{label}` is not a category of `{column}`")))?,
                ColumnKind::Continuous { .. } => {
                    return Err(Error::InvalidArgument(format!("`{column}` is not categorical")))
                }
            } as f64;
            ds.records()
                .iter()
                .enumerate()
                .filter(|(_, row)| row[j] == code)
                .map(|(i, _)| i)
                .collect()
        }
    };
    Ok(OutlierSet {
        indices,
        rule: rule.clone(),
    })
}
