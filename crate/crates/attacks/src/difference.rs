//! Membership and attribute inference from two (or `k`) metrics calls.

use serde::{Deserialize, Serialize};

use sbpm_core::tabular::{Dataset, Record};
use sbpm_provider::MetricsResponse;

use crate::client::{match_count, Client};
use crate::{AttackError, Result};

/// A provider sample that passes every test, with its visible match count.
#[derive(Clone, Debug)]
pub struct Base {
    pub synth: Dataset,
    pub matches: u64,
}

/// Samples `n` rows until a sample passes every test.
pub fn passing_base(client: &Client, n: usize, max_tries: usize, seed: u64) -> Result<Base> {
    for attempt in 0..max_tries {
        let synth = client.sample(n, Some(sbpm_core::seed::derive(seed, "base", attempt as u64)))?;
        if synth.is_empty() {
            continue;
        }
        if let Some(scores) = client.metrics(&synth)?.scores {
            let matches = match_count(scores.ims.share_synth, synth.len());
            return Ok(Base { synth, matches });
        }
    }
    Err(AttackError::BaseNeverPasses(max_tries))
}

/// Match count of `base + extra`, or `None` when the identical-match share
/// flipped to failing (which only more matches can cause).
fn augmented_matches(resp: &MetricsResponse, rows: usize) -> Option<Option<u64>> {
    match resp.scores {
        Some(s) => Some(Some(match_count(s.ims.share_synth, rows))),
        None if !resp.flags.ims => Some(None),
        None => None,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Membership {
    pub member: bool,
    /// The answer could not be read off the response (a distance test failed
    /// while the match share still passed); `member` is then false.
    pub undetermined: bool,
}

/// Is `target` in the train data? One metrics call on top of the base.
pub fn difference_membership(client: &Client, base: &Base, target: &Record) -> Result<Membership> {
    let synth = base.synth.extended([target.clone()])?;
    let resp = client.metrics(&synth)?;
    Ok(match augmented_matches(&resp, synth.len()) {
        Some(Some(c)) => Membership {
            member: c > base.matches,
            undetermined: false,
        },
        Some(None) => Membership {
            member: true,
            undetermined: false,
        },
        None => Membership {
            member: false,
            undetermined: true,
        },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeGuess {
    /// Index into the candidate list.
    pub index: usize,
    pub value: f64,
    /// Match count per candidate; `None` when the share flipped to failing.
    pub matches: Vec<Option<u64>>,
    /// No candidate raised the match count, so the first was returned.
    pub low_confidence: bool,
}

/// Completes `partial[column]` with each candidate in turn (one metrics call
/// each) and returns the completion with the most matches, lowest index on ties.
pub fn difference_attribute(
    client: &Client,
    base: &Base,
    partial: &Record,
    column: usize,
    candidates: &[f64],
) -> Result<AttributeGuess> {
    if candidates.is_empty() {
        return Err(AttackError::Config("no candidate values".into()));
    }
    if column >= partial.len() {
        return Err(AttackError::Config(format!("column {column} out of range")));
    }
    let mut matches = Vec::with_capacity(candidates.len());
    for &v in candidates {
        let mut rec = partial.clone();
        rec[column] = v;
        let synth = base.synth.extended([rec])?;
        let resp = client.metrics(&synth)?;
        matches.push(augmented_matches(&resp, synth.len()).unwrap_or(Some(base.matches)));
    }
    let rank = |m: &Option<u64>| m.map_or(u64::MAX, |c| c);
    let mut index = 0;
    for (i, m) in matches.iter().enumerate() {
        if rank(m) > rank(&matches[index]) {
            index = i;
        }
    }
    let low_confidence = matches.iter().all(|m| rank(m) <= base.matches);
    Ok(AttributeGuess {
        index,
        value: candidates[index],
        matches,
        low_confidence,
    })
}
