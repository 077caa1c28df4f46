//! JSON bodies of the HTTP endpoints. Categorical cells travel as their
//! labels, continuous cells as numbers.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use sbpm_core::tabular::{render_record, Dataset, Schema, WireValue};

pub const SAMPLE_PATH: &str = "/v1/sample";
pub const METRICS_PATH: &str = "/v1/metrics";
pub const STATS_PATH: &str = "/v1/stats";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRequest {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleResponse {
    pub records: Vec<Vec<WireValue>>,
    pub schema: Schema,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsRequest {
    pub records: Vec<Vec<WireValue>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

pub fn encode_records(ds: &Dataset) -> Vec<Vec<WireValue>> {
    ds.records().iter().map(|r| render_record(ds.schema(), r)).collect()
}

/// Decodes wire rows against `schema`, naming the first offending cell.
pub fn decode_records(schema: &Arc<Schema>, rows: &[Vec<WireValue>]) -> sbpm_core::Result<Dataset> {
    let mut out = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        if row.len() != schema.len() {
            return Err(sbpm_core::Error::SchemaMismatch(format!(
                "row {i} has {} values, expected {}",
                row.len(),
                schema.len()
            )));
        }
        let rec = row
            .iter()
            .enumerate()
            .map(|(j, v)| {
                schema
                    .encode(j, v)
                    .map_err(|reason| sbpm_core::Error::SchemaMismatch(format!("row {i}, column {j}: {reason}")))
            })
            .collect::<sbpm_core::Result<Vec<f64>>>()?;
        out.push(rec);
    }
    Dataset::new(schema.clone(), out, "wire")
}

impl SampleResponse {
    pub fn from_dataset(ds: &Dataset) -> Self {
        SampleResponse {
            records: encode_records(ds),
            schema: ds.schema().clone(),
        }
    }

    pub fn into_dataset(self) -> sbpm_core::Result<Dataset> {
        decode_records(&Arc::new(self.schema), &self.records)
    }
}
