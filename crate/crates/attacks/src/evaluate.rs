//! Harness-side scoring. Needs the hidden train data, so the adversary never
//! calls anything here.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use sbpm_core::metrics::{DistanceMetric, Reference};
use sbpm_core::tabular::{Dataset, Record, RecordKey};

use crate::reconsyn::{AttackResult, RoundTrace};
use crate::{AttackError, CallLedger, History, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Share of target rows whose record was reconstructed.
    pub recall: f64,
    /// Share of reconstructed records present in the train data.
    pub precision: f64,
    /// Nothing was reconstructed and `precision` is 1.0 by convention.
    pub precision_by_convention: bool,
    pub targets: usize,
    pub targets_hit: usize,
    pub reconstructed: usize,
    pub calls: CallLedger,
}

/// Recall against `targets` (rows, counted with multiplicity) and precision
/// against `train`.
pub fn evaluate_rows(rows: &[Record], train: &Dataset, targets: &Dataset, calls: CallLedger) -> Result<Evaluation> {
    if targets.is_empty() {
        return Err(AttackError::NoTargets);
    }
    let claimed: HashSet<RecordKey> = rows.iter().map(|r| RecordKey::of(r)).collect();
    let train_keys: HashSet<RecordKey> = train.keys().collect();
    let targets_hit = targets.keys().filter(|k| claimed.contains(k)).count();
    let correct = claimed.iter().filter(|k| train_keys.contains(k)).count();
    let (precision, conv) = if claimed.is_empty() {
        (1.0, true)
    } else {
        (correct as f64 / claimed.len() as f64, false)
    };
    Ok(Evaluation {
        recall: targets_hit as f64 / targets.len() as f64,
        precision,
        precision_by_convention: conv,
        targets: targets.len(),
        targets_hit,
        reconstructed: claimed.len(),
        calls,
    })
}

pub fn evaluate_attack(result: &AttackResult, train: &Dataset, targets: &Dataset) -> Result<Evaluation> {
    evaluate_rows(result.rows(), train, targets, result.calls_used)
}

/// Recall after each traced round.
pub fn recall_trace(result: &AttackResult, targets: &Dataset) -> Result<Vec<(RoundTrace, f64)>> {
    if targets.is_empty() {
        return Err(AttackError::NoTargets);
    }
    let target_keys: Vec<RecordKey> = targets.keys().collect();
    let mut claimed = HashSet::new();
    let mut hit = 0;
    let mut next = 0;
    let mut out = Vec::with_capacity(result.trace.len());
    for t in &result.trace {
        while next < t.reconstructed_total.min(result.rows().len()) {
            claimed.insert(RecordKey::of(&result.rows()[next]));
            next += 1;
        }
        if t.new_reconstructed > 0 || out.is_empty() {
            hit = target_keys.iter().filter(|k| claimed.contains(*k)).count();
        }
        out.push((t.clone(), hit as f64 / target_keys.len() as f64));
    }
    Ok(out)
}

/// History entries whose stored distance disagrees with a brute-force
/// nearest-neighbour search over `train`.
pub fn verify_history(history: &History, train: &Dataset, metric: DistanceMetric) -> Result<Vec<(Record, f64, f64)>> {
    let entries: Vec<Record> = history.iter().map(|e| e.record.clone()).collect();
    if entries.is_empty() {
        return Ok(Vec::new());
    }
    let query = train.filter(|_, _| false).extended(entries)?;
    let truth = Reference::new(train, metric)?.nearest(&query)?;
    Ok(history
        .iter()
        .zip(truth)
        .filter(|(e, t)| (e.distance - t).abs() > 1e-9 * t.max(1.0))
        .map(|(e, t)| (e.record.clone(), e.distance, t))
        .collect())
}

/// Area under the ROC curve of `scores` for positives `labels`, ties counted
/// as one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> f64 {
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l).map(|(&s, _)| s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| !l).map(|(&s, _)| s).collect();
    if pos.is_empty() || neg.is_empty() {
        return f64::NAN;
    }
    let mut wins = 0.0;
    for p in &pos {
        for n in &neg {
            wins += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / (pos.len() * neg.len()) as f64
}
