//! Finding the regions of the data space where train outliers live, from
//! provider samples alone.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use sbpm_core::metrics::percentile_of;
use sbpm_core::mixture::{cluster_sizes, fit_gmm, smallest_clusters, GmmModel};
use sbpm_core::seed;
use sbpm_core::tabular::{Dataset, Record};

use crate::{AttackError, Client, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum LocatorStrategy {
    /// The smallest mixture clusters whose combined size stays within the
    /// outlier budget.
    SmallestClusters,
    /// Rows whose mixture log-density is among the lowest `margin` times the
    /// outlier share of the locator sample.
    LowDensity { margin: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocatorConfig {
    pub k: usize,
    pub strategy: LocatorStrategy,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for LocatorConfig {
    fn default() -> Self {
        LocatorConfig {
            k: 10,
            strategy: LocatorStrategy::SmallestClusters,
            max_iters: 200,
            tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Rule {
    Everything,
    Nothing,
    Clusters(BTreeSet<usize>),
    Density(f64),
}

/// Decides whether a synthetic row falls in a located outlier region.
#[derive(Clone, Debug, PartialEq)]
pub struct OutliersLocator {
    model: Option<GmmModel>,
    rule: Rule,
}

impl OutliersLocator {
    /// Accepts every row; used when any record is a target.
    pub fn any() -> Self {
        OutliersLocator {
            model: None,
            rule: Rule::Everything,
        }
    }

    pub fn model(&self) -> Option<&GmmModel> {
        self.model.as_ref()
    }

    /// Selected cluster ids (empty unless the smallest-clusters strategy was used).
    pub fn clusters(&self) -> BTreeSet<usize> {
        match &self.rule {
            Rule::Clusters(c) => c.clone(),
            _ => BTreeSet::new(),
        }
    }

    pub fn density_threshold(&self) -> Option<f64> {
        match self.rule {
            Rule::Density(t) => Some(t),
            _ => None,
        }
    }

    pub fn accepts(&self, row: &[f64]) -> bool {
        match (&self.rule, &self.model) {
            (Rule::Everything, _) => true,
            (Rule::Nothing, _) => false,
            (Rule::Clusters(c), Some(m)) => c.contains(&m.predict_row(row)),
            (Rule::Density(t), Some(m)) => m.log_density(row) <= *t,
            _ => unreachable!("fitted rules carry a model"),
        }
    }

    pub fn filter<'r>(&self, rows: impl IntoIterator<Item = &'r Record>) -> Vec<&'r Record> {
        rows.into_iter().filter(|r| self.accepts(r)).collect()
    }
}

/// One sample call of `3 * n_train` rows, a mixture fit, and the selection of
/// outlier regions sized for `n_out` outliers among `n_train` rows.
pub fn outliers_locator(client: &Client, n_train: usize, n_out: usize, cfg: &LocatorConfig, seed: u64) -> Result<OutliersLocator> {
    if n_train == 0 {
        return Err(AttackError::Config("n_train must be positive".into()));
    }
    let sample = client.sample(3 * n_train, Some(seed::derive(seed, "locator", 0)))?;
    fit_locator(&sample, n_train, n_out, cfg, seed)
}

/// The fitting half of [`outliers_locator`], for an already drawn sample.
pub fn fit_locator(sample: &Dataset, n_train: usize, n_out: usize, cfg: &LocatorConfig, seed: u64) -> Result<OutliersLocator> {
    let model = fit_gmm(sample, cfg.k, cfg.max_iters, cfg.tol, seed::derive(seed, "locator_gmm", 0))?;
    if n_out == 0 {
        return Ok(OutliersLocator {
            model: Some(model),
            rule: Rule::Nothing,
        });
    }
    let share = n_out as f64 / n_train as f64;
    let rule = match cfg.strategy {
        LocatorStrategy::SmallestClusters => {
            let budget = (share * sample.len() as f64).round() as usize;
            Rule::Clusters(smallest_clusters(&cluster_sizes(&model.fit_labels, model.k), budget))
        }
        LocatorStrategy::LowDensity { margin } => {
            if !(margin > 0.0) {
                return Err(AttackError::Config(format!("density margin must be positive, got {margin}")));
            }
            let dens: Vec<f64> = sample.records().iter().map(|r| model.log_density(r)).collect();
            Rule::Density(percentile_of(&dens, (100.0 * margin * share).min(100.0)))
        }
    };
    Ok(OutliersLocator {
        model: Some(model),
        rule,
    })
}
