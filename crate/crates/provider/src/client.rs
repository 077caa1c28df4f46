use std::sync::{Arc, Mutex};
use std::time::Duration;

use reqwest::blocking::Client;
use serde::de::DeserializeOwned;
use serde::Serialize;

use sbpm_core::tabular::{Dataset, Schema};

use crate::wire::{self, ErrorBody, MetricsRequest, SampleRequest, SampleResponse};
use crate::{CallStats, Error, MetricsResponse, ProviderApi, Result};

/// A provider reached over HTTP.
pub struct RemoteProvider {
    base: String,
    http: Client,
    schema: Mutex<Option<Arc<Schema>>>,
}

impl RemoteProvider {
    pub fn connect(address: &str) -> Result<Self> {
        let base = if address.starts_with("http://") || address.starts_with("https://") {
            address.trim_end_matches('/').to_string()
        } else {
            format!("http://{}", address.trim_end_matches('/'))
        };
        let http = Client::builder()
            .timeout(Duration::from_secs(3600))
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        Ok(RemoteProvider {
            base,
            http,
            schema: Mutex::new(None),
        })
    }

    fn finish<T: DeserializeOwned>(resp: reqwest::blocking::Response) -> Result<T> {
        let status = resp.status();
        let body = resp.bytes().map_err(|e| Error::Transport(e.to_string()))?;
        if status.is_success() {
            return serde_json::from_slice(&body).map_err(|e| Error::Transport(format!("bad response body: {e}")));
        }
        let message = serde_json::from_slice::<ErrorBody>(&body)
            .map(|b| b.error)
            .unwrap_or_else(|_| String::from_utf8_lossy(&body).into_owned());
        Err(match status.as_u16() {
            400 => Error::Core(sbpm_core::Error::SchemaMismatch(message)),
            422 => Error::Malformed(message),
            429 => Error::QuotaExceeded(0),
            s => Error::Remote { status: s, message },
        })
    }

    fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T> {
        let bytes = serde_json::to_vec(body).map_err(|e| Error::Malformed(e.to_string()))?;
        let resp = self
            .http
            .post(format!("{}{path}", self.base))
            .header("content-type", "application/json")
            .body(bytes)
            .send()
            .map_err(|e| Error::Transport(e.to_string()))?;
        Self::finish(resp)
    }

    /// Reuses one schema allocation across responses.
    fn intern(&self, schema: Schema) -> Arc<Schema> {
        let mut cached = self.schema.lock().expect("schema cache poisoned");
        match cached.as_ref() {
            Some(s) if **s == schema => s.clone(),
            _ => {
                let s = Arc::new(schema);
                *cached = Some(s.clone());
                s
            }
        }
    }
}

impl ProviderApi for RemoteProvider {
    fn sample(&self, n: usize, seed: Option<u64>) -> Result<Dataset> {
        let resp: SampleResponse = self.post(wire::SAMPLE_PATH, &SampleRequest { n, seed })?;
        let schema = self.intern(resp.schema);
        Ok(wire::decode_records(&schema, &resp.records)?.with_provenance("provider/sample"))
    }

    fn metrics(&self, synth: &Dataset) -> Result<MetricsResponse> {
        self.post(
            wire::METRICS_PATH,
            &MetricsRequest {
                records: wire::encode_records(synth),
            },
        )
    }

    fn stats(&self) -> Result<CallStats> {
        let resp = self
            .http
            .get(format!("{}{}", self.base, wire::STATS_PATH))
            .send()
            .map_err(|e| Error::Transport(e.to_string()))?;
        Self::finish(resp)
    }
}
