//! The provider side of the threat model. A [`Provider`] splits private data
//! into train and test halves, fits a generator on train, and then answers
//! only two kinds of question: "give me `n` synthetic rows" and "do these rows
//! pass the privacy tests?". Attacks see it through [`ProviderApi`], which is
//! also implemented by the HTTP client.

mod audit;
mod client;
mod local;
mod server;
pub mod wire;

use serde::{Deserialize, Serialize};

use sbpm_core::metrics::PrivacyReport;
use sbpm_core::tabular::Dataset;

pub use audit::{Access, Audited};
pub use client::RemoteProvider;
pub use local::{Filters, Provider, ProviderConfig};
pub use server::{serve, spawn, ServerHandle};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] sbpm_core::Error),
    #[error("call quota of {0} exhausted")]
    QuotaExceeded(u64),
    #[error("malformed request: {0}")]
    Malformed(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("provider answered {status}: {message}")]
    Remote { status: u16, message: String },
}

/// Pass/fail outcome of each test. Always returned.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flags {
    pub ims: bool,
    pub dcr: bool,
    pub nndr: bool,
}

impl Flags {
    pub fn all(&self) -> bool {
        self.ims && self.dcr && self.nndr
    }
}

/// What the metrics endpoint reveals: the flags, and the full statistics only
/// when every test passed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsResponse {
    pub flags: Flags,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<PrivacyReport>,
}

impl MetricsResponse {
    pub fn from_report(report: PrivacyReport) -> Self {
        let flags = Flags {
            ims: report.ims.pass,
            dcr: report.dcr.pass,
            nndr: report.nndr.pass,
        };
        MetricsResponse {
            flags,
            scores: flags.all().then_some(report),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallStats {
    pub sample_calls: u64,
    pub metric_calls: u64,
}

/// Black-box access to a fitted generator and its privacy tests.
pub trait ProviderApi: Send + Sync {
    /// Samples `n` rows (fewer if filters are on). Without a seed the provider
    /// picks one from its own state.
    fn sample(&self, n: usize, seed: Option<u64>) -> Result<Dataset>;

    /// Scores arbitrary rows against the hidden train/test split.
    fn metrics(&self, synth: &Dataset) -> Result<MetricsResponse>;

    fn stats(&self) -> Result<CallStats>;
}

impl<P: ProviderApi + ?Sized> ProviderApi for &P {
    fn sample(&self, n: usize, seed: Option<u64>) -> Result<Dataset> {
        (**self).sample(n, seed)
    }

    fn metrics(&self, synth: &Dataset) -> Result<MetricsResponse> {
        (**self).metrics(synth)
    }

    fn stats(&self) -> Result<CallStats> {
        (**self).stats()
    }
}

impl<P: ProviderApi + ?Sized> ProviderApi for std::sync::Arc<P> {
    fn sample(&self, n: usize, seed: Option<u64>) -> Result<Dataset> {
        (**self).sample(n, seed)
    }

    fn metrics(&self, synth: &Dataset) -> Result<MetricsResponse> {
        (**self).metrics(synth)
    }

    fn stats(&self) -> Result<CallStats> {
        (**self).stats()
    }
}
