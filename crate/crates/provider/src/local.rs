use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use sbpm_core::metrics::{
    outlier_filter_with, outlier_threshold, similarity_filter_with, DistanceMetric, MetricsContext,
};
use sbpm_core::seed;
use sbpm_core::synthesis::{self, DpBudget, GeneratorKind, GeneratorModel};
use sbpm_core::tabular::{split, Dataset, Schema};

use crate::{CallStats, Error, MetricsResponse, ProviderApi, Result};

/// Privacy filters applied to every sample before it leaves the provider.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Filters {
    /// Similarity filter threshold: drop rows with `d1 <= tau`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity: Option<f64>,
    /// Outlier filter percentile.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outlier: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub model: GeneratorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dp: Option<DpBudget>,
    pub metric: DistanceMetric,
    #[serde(default)]
    pub filters: Filters,
    pub seed: u64,
    /// Total number of sample and metrics calls allowed, if limited.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quota: Option<u64>,
}

impl ProviderConfig {
    pub fn new(model: GeneratorKind, metric: DistanceMetric, seed: u64) -> Self {
        ProviderConfig {
            model,
            dp: None,
            metric,
            filters: Filters::default(),
            seed,
            quota: None,
        }
    }
}

/// The in-process provider.
#[derive(Debug)]
pub struct Provider {
    train: Dataset,
    test: Dataset,
    model: GeneratorModel,
    metrics: MetricsContext,
    filters: Filters,
    of_threshold: Option<f64>,
    seed: u64,
    quota: Option<u64>,
    sample_calls: AtomicU64,
    metric_calls: AtomicU64,
}

impl Provider {
    pub fn new(data: &Dataset, config: &ProviderConfig) -> Result<Self> {
        let (train, test) = split(data, seed::derive(config.seed, "split", 0))?;
        let model = synthesis::fit(&config.model, &train, config.dp, seed::derive(config.seed, "fit", 0))?;
        if model.schema().as_ref() != train.schema() {
            return Err(sbpm_core::Error::SchemaMismatch("the model's schema differs from the data's".into()).into());
        }
        let metrics = MetricsContext::new(&train, &test, config.metric)?;
        if let Some(tau) = config.filters.similarity {
            if !(tau >= 0.0) {
                return Err(sbpm_core::Error::InvalidArgument(format!("similarity threshold must be >= 0, got {tau}")).into());
            }
        }
        let of_threshold = config
            .filters
            .outlier
            .map(|p| outlier_threshold(metrics.train(), p))
            .transpose()?;
        Ok(Provider {
            train,
            test,
            model,
            metrics,
            filters: config.filters,
            of_threshold,
            seed: config.seed,
            quota: config.quota,
            sample_calls: AtomicU64::new(0),
            metric_calls: AtomicU64::new(0),
        })
    }

    pub fn schema(&self) -> &Arc<Schema> {
        self.train.schema_arc()
    }

    pub fn metric(&self) -> DistanceMetric {
        self.metrics.metric()
    }

    /// The hidden train half. For evaluation harnesses only; never reachable
    /// through [`ProviderApi`] or the wire.
    pub fn hidden_train(&self) -> &Dataset {
        &self.train
    }

    /// The hidden test half. Harness use only.
    pub fn hidden_test(&self) -> &Dataset {
        &self.test
    }

    fn admit(&self) -> Result<()> {
        if let Some(q) = self.quota {
            let used = self.sample_calls.load(Ordering::SeqCst) + self.metric_calls.load(Ordering::SeqCst);
            if used >= q {
                return Err(Error::QuotaExceeded(q));
            }
        }
        Ok(())
    }
}

impl ProviderApi for Provider {
    fn sample(&self, n: usize, seed: Option<u64>) -> Result<Dataset> {
        self.admit()?;
        let call = self.sample_calls.fetch_add(1, Ordering::SeqCst);
        let seed = seed.unwrap_or_else(|| seed::derive(self.seed, "sample", call));
        let mut out = synthesis::sample(&self.model, n, seed);
        if let Some(tau) = self.filters.similarity {
            out = similarity_filter_with(self.metrics.train(), &out, tau)?;
        }
        if let Some(t) = self.of_threshold {
            out = outlier_filter_with(self.metrics.train(), &out, t)?;
        }
        Ok(out.with_provenance("provider/sample"))
    }

    fn metrics(&self, synth: &Dataset) -> Result<MetricsResponse> {
        self.admit()?;
        let report = self.metrics.evaluate(synth)?;
        self.metric_calls.fetch_add(1, Ordering::SeqCst);
        Ok(MetricsResponse::from_report(report))
    }

    fn stats(&self) -> Result<CallStats> {
        Ok(CallStats {
            sample_calls: self.sample_calls.load(Ordering::SeqCst),
            metric_calls: self.metric_calls.load(Ordering::SeqCst),
        })
    }
}
