use std::sync::Mutex;

use sbpm_core::tabular::Dataset;

use crate::{CallStats, MetricsResponse, ProviderApi, Result};

/// One access made through an [`Audited`] provider.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Access {
    Sample { n: usize, seed: Option<u64>, ok: bool },
    Metrics { rows: usize, ok: bool },
    Stats,
}

/// Records every call passing through to the inner provider.
pub struct Audited<P> {
    inner: P,
    log: Mutex<Vec<Access>>,
}

impl<P: ProviderApi> Audited<P> {
    pub fn new(inner: P) -> Self {
        Audited {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }

    pub fn log(&self) -> Vec<Access> {
        self.log.lock().expect("audit log poisoned").clone()
    }

    /// Successful sample and metrics calls seen so far.
    pub fn seen(&self) -> CallStats {
        let mut s = CallStats::default();
        for a in self.log.lock().expect("audit log poisoned").iter() {
            match a {
                Access::Sample { ok: true, .. } => s.sample_calls += 1,
                Access::Metrics { ok: true, .. } => s.metric_calls += 1,
                _ => {}
            }
        }
        s
    }

    fn push(&self, a: Access) {
        self.log.lock().expect("audit log poisoned").push(a);
    }
}

impl<P: ProviderApi> ProviderApi for Audited<P> {
    fn sample(&self, n: usize, seed: Option<u64>) -> Result<Dataset> {
        let out = self.inner.sample(n, seed);
        self.push(Access::Sample { n, seed, ok: out.is_ok() });
        out
    }

    fn metrics(&self, synth: &Dataset) -> Result<MetricsResponse> {
        let out = self.inner.metrics(synth);
        self.push(Access::Metrics {
            rows: synth.len(),
            ok: out.is_ok(),
        });
        out
    }

    fn stats(&self) -> Result<CallStats> {
        self.push(Access::Stats);
        self.inner.stats()
    }
}
