//! Turning aggregate scores into exact per-record distances.
//!
//! `m` identical copies of a padding record with known distance `d_pad`, plus
//! one candidate, make every statistic but the mean insensitive to the
//! candidate once `m >= 20`: the 5th percentile of `m + 1` values sits at rank
//! `0.05 * m >= 1`, which is always a padding copy. The mean then gives the
//! candidate's distance as `mean * (m + 1) - m * d_pad`.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use sbpm_core::tabular::{Dataset, Record, RecordKey, Schema};

use crate::client::{match_count, Client};
use crate::{AttackError, Result};

/// Smallest number of padding copies for which one extra record cannot move
/// the 5th percentile.
pub const MIN_SAFE_COPIES: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PaddingRecord {
    pub record: Record,
    pub distance: f64,
    pub copies: usize,
    /// Whether `copies` copies alone passed every test.
    pub valid: bool,
    #[serde(skip)]
    schema: Option<Arc<Schema>>,
}

impl PaddingRecord {
    pub fn schema(&self) -> &Arc<Schema> {
        self.schema.as_ref().expect("padding built by bootstrap_padding")
    }

    /// `copies` copies of the padding followed by `extra`.
    pub fn padded(&self, extra: &[Record]) -> Dataset {
        let mut rows = vec![self.record.clone(); self.copies];
        rows.extend(extra.iter().cloned());
        Dataset::new(self.schema().clone(), rows, "padded").expect("rows come from the provider's schema")
    }
}

/// Finds a record whose `m` copies pass every test, trying the most frequent
/// records of a fresh sample first, and reads its distance off the scores.
pub fn bootstrap_padding(client: &Client, m: usize, pool: usize, max_tries: usize, seed: u64) -> Result<PaddingRecord> {
    if m == 0 {
        return Err(AttackError::Config("padding needs at least one copy".into()));
    }
    let sample = client.sample(pool, Some(seed))?;
    let schema = sample.schema_arc().clone();
    let mut counts: HashMap<RecordKey, (usize, usize)> = HashMap::new();
    for (i, r) in sample.records().iter().enumerate() {
        counts.entry(RecordKey::of(r)).or_insert((0, i)).0 += 1;
    }
    let mut order: Vec<(usize, usize)> = counts.into_values().collect();
    order.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, first) in order.iter().take(max_tries) {
        let record = sample.records()[first].clone();
        let copies = Dataset::new(schema.clone(), vec![record.clone(); m], "padding")?;
        let resp = client.metrics(&copies)?;
        if let Some(scores) = resp.scores {
            return Ok(PaddingRecord {
                record,
                // every copy has the same distance, so any statistic is it exactly
                distance: scores.dcr.mean_synth,
                copies: m,
                valid: true,
                schema: Some(schema),
            });
        }
    }
    Err(AttackError::NoValidPadding(order.len().min(max_tries)))
}

/// Exact distance from `candidate` to its nearest train record, using one
/// metrics call.
pub fn extract_distance(client: &Client, padding: &PaddingRecord, candidate: &Record) -> Result<f64> {
    let m = padding.copies;
    let resp = client.metrics(&padding.padded(std::slice::from_ref(candidate)))?;
    let Some(scores) = resp.scores else {
        if !resp.flags.ims && resp.flags.dcr && resp.flags.nndr {
            // padding alone passes, and only an exact match can raise the share
            return Ok(0.0);
        }
        return Err(AttackError::Extraction(format!(
            "tests failed beyond the identical-match share ({:?}); use more padding copies",
            resp.flags
        )));
    };
    let pad_matches = if padding.distance == 0.0 { m as u64 } else { 0 };
    if match_count(scores.ims.share_synth, m + 1) > pad_matches {
        return Ok(0.0);
    }
    let d = scores.dcr.mean_synth * (m + 1) as f64 - m as f64 * padding.distance;
    Ok(if padding.schema().all_categorical() {
        d.round().max(0.0)
    } else {
        d.max(0.0)
    })
}
