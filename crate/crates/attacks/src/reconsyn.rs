//! ReconSyn: locate outlier regions, sample them round after round keeping
//! every exact distance learned, then search around near misses.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use sbpm_core::seed;
use sbpm_core::tabular::{render_record, ColumnKind, Record, RecordKey, Schema, WireValue};

use crate::client::match_count;
use crate::distance::{bootstrap_padding, extract_distance, PaddingRecord, MIN_SAFE_COPIES};
use crate::locator::{outliers_locator, LocatorConfig, OutliersLocator};
use crate::{AttackError, CallLedger, Client, History, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    #[default]
    OutliersOnly,
    AnyRecord,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackConfig {
    /// Rows in the provider's train data, assumed known.
    pub n_train: usize,
    /// Expected number of train outliers.
    pub n_out: usize,
    pub rounds: usize,
    pub search: bool,
    /// Largest stored distance the search revisits.
    pub search_depth: usize,
    /// Search only while the reconstructed count is below this share of
    /// `n_out`; `None` always searches. The count includes any non-outlier
    /// train rows the sample phase happened to hit, so it overestimates recall.
    pub search_below: Option<f64>,
    pub padding_copies: usize,
    pub locator: LocatorConfig,
    pub target: TargetMode,
    pub one_call: bool,
    pub call_budget: Option<u64>,
    /// Sample size used to look for a padding record.
    pub padding_pool: usize,
    pub max_padding_tries: usize,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            n_train: 1000,
            n_out: 100,
            rounds: 1000,
            search: true,
            search_depth: 2,
            search_below: None,
            padding_copies: 100,
            locator: LocatorConfig::default(),
            target: TargetMode::OutliersOnly,
            one_call: false,
            call_budget: None,
            padding_pool: 1000,
            max_padding_tries: 200,
            seed: 0,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(AttackError::Config(m.into()));
        if self.n_train == 0 {
            return bad("n_train must be at least 1");
        }
        if self.rounds == 0 {
            return bad("rounds must be at least 1");
        }
        if self.search_depth == 0 {
            return bad("search depth must be at least 1");
        }
        if self.padding_copies < MIN_SAFE_COPIES && !self.one_call {
            return bad("fewer than 20 padding copies let the candidate move the 5th percentile");
        }
        if self.locator.k == 0 {
            return bad("the locator needs at least one cluster");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Sample,
    Search,
    OneCall,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub phase: Phase,
    pub round: usize,
    /// Rows checked against the distance oracle in this round.
    pub candidates: usize,
    pub new_reconstructed: usize,
    /// Cumulative count, so `reconstructed[..total]` is the set after this round.
    pub reconstructed_total: usize,
    pub calls: CallLedger,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PaddingSummary {
    pub record: Vec<WireValue>,
    pub distance: f64,
    pub copies: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub config: AttackConfig,
    /// Records claimed to be in the train data, in discovery order.
    pub reconstructed: Vec<Vec<WireValue>>,
    pub calls_used: CallLedger,
    pub history_size: usize,
    pub padding: Option<PaddingSummary>,
    /// The call budget ran out before the attack finished.
    pub truncated: bool,
    pub trace: Vec<RoundTrace>,
    #[serde(skip)]
    rows: Vec<Record>,
}

impl AttackResult {
    /// The reconstructed records in the provider's numeric encoding.
    pub fn rows(&self) -> &[Record] {
        &self.rows
    }

    /// Re-encodes the rendered records, e.g. after reading the JSON back.
    pub fn decode_rows(&self, schema: &Schema) -> Result<Vec<Record>> {
        self.reconstructed
            .iter()
            .map(|r| {
                if r.len() != schema.len() {
                    return Err(AttackError::Config("record width does not match the schema".into()));
                }
                r.iter()
                    .enumerate()
                    .map(|(j, v)| schema.encode(j, v).map_err(AttackError::Config))
                    .collect()
            })
            .collect()
    }
}

/// Reconstructed records accumulated by the subattacks.
#[derive(Clone, Debug, Default)]
pub struct Reconstructed {
    rows: Vec<Record>,
    seen: HashSet<RecordKey>,
}

impl Reconstructed {
    pub fn push(&mut self, row: Record) -> bool {
        if self.seen.insert(RecordKey::of(&row)) {
            self.rows.push(row);
            true
        } else {
            false
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Record] {
        &self.rows
    }
}

/// Mutable state of one attack run.
pub struct AttackState {
    pub history: History,
    pub reconstructed: Reconstructed,
    pub trace: Vec<RoundTrace>,
    pub truncated: bool,
}

impl AttackState {
    pub fn new() -> Self {
        AttackState {
            history: History::new(),
            reconstructed: Reconstructed::default(),
            trace: Vec::new(),
            truncated: false,
        }
    }

    /// Distance of `row`, from history or one oracle call. Distance-0 rows are
    /// added to the reconstructed set.
    fn learn(&mut self, client: &Client, padding: &PaddingRecord, row: &Record) -> Result<f64> {
        if let Some(d) = self.history.distance(row) {
            return Ok(d);
        }
        let d = extract_distance(client, padding, row)?;
        self.history.insert(row.clone(), d);
        if d == 0.0 {
            self.reconstructed.push(row.clone());
        }
        Ok(d)
    }
}

impl Default for AttackState {
    fn default() -> Self {
        Self::new()
    }
}

fn budget_stop<T>(r: Result<T>, state: &mut AttackState) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(AttackError::BudgetExhausted(_)) => {
            state.truncated = true;
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

/// SampleAttack: each round samples `n_train` rows, keeps the unseen ones in
/// the outlier regions and learns their exact distances.
pub fn sample_attack(
    client: &Client,
    locator: &OutliersLocator,
    padding: &PaddingRecord,
    cfg: &AttackConfig,
    state: &mut AttackState,
) -> Result<()> {
    for round in 0..cfg.rounds {
        let seed = seed::derive(cfg.seed, "sample_attack", round as u64);
        let Some(sample) = budget_stop(client.sample(cfg.n_train, Some(seed)), state)? else {
            return Ok(());
        };
        let mut fresh = HashSet::new();
        let candidates: Vec<&Record> = locator
            .filter(sample.records())
            .into_iter()
            .filter(|r| !state.history.contains(r) && fresh.insert(RecordKey::of(r)))
            .collect();
        let before = state.reconstructed.len();
        let mut checked = 0;
        for row in candidates {
            if budget_stop(state.learn(client, padding, row), state)?.is_none() {
                break;
            }
            checked += 1;
        }
        state.trace.push(RoundTrace {
            phase: Phase::Sample,
            round,
            candidates: checked,
            new_reconstructed: state.reconstructed.len() - before,
            reconstructed_total: state.reconstructed.len(),
            calls: client.ledger(),
        });
        if state.truncated {
            return Ok(());
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct OneCallClaim {
    pub claimed: Vec<Record>,
    /// Distinct located rows submitted in the metrics call.
    pub submitted: usize,
    pub schema: Arc<Schema>,
}

/// One sample call and one metrics call: submits the distinct located rows
/// and claims as many of them, most duplicated first, as the identical-match
/// share reveals.
pub fn sample_attack_one_call(client: &Client, locator: &OutliersLocator, n: usize, seed: u64) -> Result<OneCallClaim> {
    let sample = client.sample(n, Some(seed::derive(seed, "one_call", 0)))?;
    let schema = sample.schema_arc().clone();
    let mut counts: HashMap<RecordKey, (usize, usize)> = HashMap::new();
    let mut distinct: Vec<Record> = Vec::new();
    for r in locator.filter(sample.records()) {
        let e = counts.entry(RecordKey::of(r)).or_insert_with(|| {
            distinct.push(r.clone());
            (0, distinct.len() - 1)
        });
        e.0 += 1;
    }
    if distinct.is_empty() {
        return Ok(OneCallClaim {
            claimed: Vec::new(),
            submitted: 0,
            schema,
        });
    }
    let mut ranked: Vec<(usize, usize)> = counts.into_values().collect();
    ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let submitted = sample.filter(|_, _| false).extended(distinct.iter().cloned())?;
    let resp = client.metrics(&submitted)?;
    let claim = match resp.scores {
        Some(s) => match_count(s.ims.share_synth, distinct.len()) as usize,
        // the share is hidden; duplicates are the best remaining signal
        None if !resp.flags.ims => ranked.iter().take_while(|(c, _)| *c >= 2).count(),
        None => 0,
    };
    Ok(OneCallClaim {
        claimed: ranked.iter().take(claim).map(|&(_, i)| distinct[i].clone()).collect(),
        submitted: distinct.len(),
        schema,
    })
}

/// `row` with column `j` set to the category after its current one.
fn next_category(schema: &Schema, row: &Record, j: usize) -> Record {
    let k = schema.columns()[j].cardinality().expect("categorical column");
    let mut out = row.clone();
    out[j] = ((row[j] as usize + 1) % k) as f64;
    out
}

/// SearchAttack: walks out from every history record within `search_depth`,
/// finds the columns that still differ from the nearest train record and
/// enumerates their supports, moving greedily to any strictly closer row.
pub fn search_attack(
    client: &Client,
    locator: &OutliersLocator,
    padding: &PaddingRecord,
    schema: &Schema,
    cfg: &AttackConfig,
    state: &mut AttackState,
) -> Result<()> {
    if !schema.all_categorical() {
        return Err(AttackError::Config("the search needs an all-categorical schema".into()));
    }
    let seeds = state.history.within(cfg.search_depth as f64);
    for (round, entry) in seeds.into_iter().enumerate() {
        let before = state.reconstructed.len();
        let calls_before = client.ledger().metrics;
        let done = search_from(client, locator, padding, schema, entry.record, entry.distance, state);
        let finished = budget_stop(done, state)?.is_some();
        state.trace.push(RoundTrace {
            phase: Phase::Search,
            round,
            candidates: (client.ledger().metrics - calls_before) as usize,
            new_reconstructed: state.reconstructed.len() - before,
            reconstructed_total: state.reconstructed.len(),
            calls: client.ledger(),
        });
        if !finished {
            break;
        }
    }
    Ok(())
}

fn search_from(
    client: &Client,
    locator: &OutliersLocator,
    padding: &PaddingRecord,
    schema: &Schema,
    mut s: Record,
    mut dist_s: f64,
    state: &mut AttackState,
) -> Result<()> {
    let width = schema.len();
    let mut dists = Vec::with_capacity(width);
    for j in 0..width {
        let neighbour = next_category(schema, &s, j);
        dists.push(state.learn(client, padding, &neighbour)?);
    }
    let open: Vec<usize> = (0..width).filter(|&j| dists[j] <= dist_s).collect();
    for j in open {
        if dist_s == 0.0 {
            break;
        }
        let ColumnKind::Categorical { support } = &schema.columns()[j].kind else {
            unreachable!("checked above");
        };
        let mut best: Option<(f64, Record)> = None;
        for v in 0..support.len() {
            let mut cand = s.clone();
            cand[j] = v as f64;
            let d = match state.history.distance(&cand) {
                Some(d) => d,
                None if locator.accepts(&cand) => state.learn(client, padding, &cand)?,
                None => continue,
            };
            if d < dist_s && best.as_ref().is_none_or(|(b, _)| d < *b) {
                best = Some((d, cand));
            }
        }
        if let Some((d, cand)) = best {
            s = cand;
            dist_s = d;
        }
    }
    Ok(())
}

/// The whole attack: locator, padding, SampleAttack, then SearchAttack on
/// categorical data unless enough records are already reconstructed.
pub fn reconsyn(client: &Client, cfg: &AttackConfig) -> Result<(AttackResult, History)> {
    cfg.validate()?;
    let any = cfg.target == TargetMode::AnyRecord;
    let locator = if any {
        OutliersLocator::any()
    } else {
        outliers_locator(client, cfg.n_train, cfg.n_out, &cfg.locator, cfg.seed)?
    };
    let mut state = AttackState::new();

    if cfg.one_call {
        let claim = sample_attack_one_call(client, &locator, cfg.n_train, cfg.seed)?;
        for r in claim.claimed {
            state.reconstructed.push(r);
        }
        state.trace.push(RoundTrace {
            phase: Phase::OneCall,
            round: 0,
            candidates: claim.submitted,
            new_reconstructed: state.reconstructed.len(),
            reconstructed_total: state.reconstructed.len(),
            calls: client.ledger(),
        });
        return Ok(finish(client, cfg, &claim.schema, None, state));
    }

    let padding = bootstrap_padding(
        client,
        cfg.padding_copies,
        cfg.padding_pool,
        cfg.max_padding_tries,
        seed::derive(cfg.seed, "padding", 0),
    )?;
    let schema = padding.schema().clone();
    sample_attack(client, &locator, &padding, cfg, &mut state)?;

    let short = cfg
        .search_below
        .is_none_or(|t| (state.reconstructed.len() as f64) < t * cfg.n_out as f64);
    let wants_search = cfg.search && !any && short;
    if wants_search && !state.truncated && schema.all_categorical() && !state.history.is_empty() {
        search_attack(client, &locator, &padding, &schema, cfg, &mut state)?;
    }
    Ok(finish(client, cfg, &schema, Some(&padding), state))
}

fn finish(
    client: &Client,
    cfg: &AttackConfig,
    schema: &Schema,
    padding: Option<&PaddingRecord>,
    state: AttackState,
) -> (AttackResult, History) {
    let rows = state.reconstructed.rows;
    let result = AttackResult {
        config: cfg.clone(),
        reconstructed: rows.iter().map(|r| render_record(schema, r)).collect(),
        calls_used: client.ledger(),
        history_size: state.history.len(),
        padding: padding.map(|p| PaddingSummary {
            record: render_record(schema, &p.record),
            distance: p.distance,
            copies: p.copies,
        }),
        truncated: state.truncated,
        trace: state.trace,
        rows,
    };
    (result, state.history)
}
