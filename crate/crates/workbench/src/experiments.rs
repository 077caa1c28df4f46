//! End-to-end attack experiments against an in-process or remote provider.

use std::collections::HashSet;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;

use sbpm_attacks::difference::{difference_attribute, difference_membership, passing_base, Base};
use sbpm_attacks::evaluate::{auc, evaluate_attack, verify_history};
use sbpm_attacks::reconsyn::{reconsyn, AttackConfig, AttackResult, TargetMode};
use sbpm_attacks::{Client, History};
use sbpm_core::metrics::DistanceMetric;
use sbpm_core::seed;
use sbpm_core::synthesis::utility;
use sbpm_core::tabular::{label_outliers, ColumnKind, Dataset, OutlierSet, RecordKey};
use sbpm_provider::{Provider, ProviderApi};

use crate::error::{config_err, Result};
use crate::report::{AttackSummary, RunReport};
use crate::spec::{eps_label, ExperimentSpec, ModelName};

/// One provider with its ground truth and the attack aimed at it.
pub struct Cell {
    pub label: String,
    pub model: ModelName,
    pub epsilon: f64,
    pub provider: Arc<Provider>,
    pub outliers: OutlierSet,
    pub attack: AttackConfig,
    pub metric: DistanceMetric,
}

impl Cell {
    pub fn new(spec: &ExperimentSpec, model: ModelName, epsilon: f64, rep: u64) -> Result<Self> {
        let data = spec.dataset(rep)?;
        let pc = spec.provider_config(&data, model, epsilon, rep);
        let provider = Arc::new(Provider::new(&data, &pc)?);
        let train = provider.hidden_train();
        let outliers = label_outliers(train, &spec.outlier_rule(train, train.len(), rep))?;
        let attack = spec.attack_config(rep, train.len(), outliers.len());
        Ok(Cell {
            label: format!("{}/eps={}/rep={rep}", model.as_str(), eps_label(epsilon)),
            model,
            epsilon,
            provider,
            outliers,
            attack,
            metric: pc.metric,
        })
    }

    pub fn train(&self) -> &Dataset {
        self.provider.hidden_train()
    }
}

pub struct AttackRun {
    pub summary: AttackSummary,
    pub result: AttackResult,
    pub history: History,
}

/// Runs ReconSyn through `api`, which must front `cell.provider`, and scores
/// it against the hidden train data.
pub fn execute(cell: &Cell, api: &dyn ProviderApi) -> Result<AttackRun> {
    let before = api.stats()?;
    let client = Client::new(api, cell.attack.call_budget);
    let (result, history) = reconsyn(&client, &cell.attack)?;
    let after = api.stats()?;
    let train = cell.train();
    let out_rows = cell.outliers.rows(train);
    let targets = match cell.attack.target {
        TargetMode::OutliersOnly => &out_rows,
        TargetMode::AnyRecord => train,
    };
    let eval = evaluate_attack(&result, train, targets)?;
    let outlier_recall = if out_rows.is_empty() {
        1.0
    } else {
        evaluate_attack(&result, train, &out_rows)?.recall
    };
    let mismatches = verify_history(&history, train, cell.metric)?;
    let ledger = client.ledger();
    let summary = AttackSummary {
        label: cell.label.clone(),
        model: cell.model.as_str().into(),
        epsilon: cell.epsilon,
        target: cell.attack.target,
        n_train: train.len(),
        n_out: out_rows.len(),
        recall: eval.recall,
        outlier_recall,
        precision: eval.precision,
        precision_by_convention: eval.precision_by_convention,
        reconstructed: eval.reconstructed,
        calls: ledger,
        ledger_matches_provider: after.sample_calls - before.sample_calls == ledger.sample
            && after.metric_calls - before.metric_calls == ledger.metrics,
        history_size: history.len(),
        history_mismatches: mismatches.len(),
        truncated: result.truncated,
    };
    Ok(AttackRun { summary, result, history })
}

fn record_attack(rep: &mut RunReport, s: &AttackSummary) {
    for (m, v) in [
        ("recall", s.recall),
        ("outlier_recall", s.outlier_recall),
        ("precision", s.precision),
        ("reconstructed", s.reconstructed as f64),
        ("n_out", s.n_out as f64),
        ("sample_calls", s.calls.sample as f64),
        ("metric_calls", s.calls.metrics as f64),
        ("history_size", s.history_size as f64),
    ] {
        rep.measure(&s.label, m, v);
    }
    rep.attacks.push(s.clone());
}

fn bookkeeping_checks(rep: &mut RunReport, s: &AttackSummary) {
    rep.check(
        &format!("{}/ledger_matches_provider", s.label),
        s.ledger_matches_provider,
        format!("{} sample + {} metrics calls", s.calls.sample, s.calls.metrics),
    );
    rep.check(
        &format!("{}/history_exact", s.label),
        s.history_mismatches == 0,
        format!("{} of {} entries differ from brute force", s.history_mismatches, s.history_size),
    );
}

/// ReconSyn with the spec's model and budget on replicate 0, plus the
/// checks that hold for every run: exact precision, a truthful call ledger
/// and a history that matches brute force.
pub fn run_attack(spec: &ExperimentSpec) -> Result<(RunReport, AttackResult)> {
    run_attack_via(spec, None)
}

/// [`run_attack`] through `remote`, which must serve the provider built from
/// the same spec and seed.
pub fn run_attack_via(spec: &ExperimentSpec, remote: Option<&dyn ProviderApi>) -> Result<(RunReport, AttackResult)> {
    let mut rep = RunReport::new(&spec.name, spec.seed, spec.config_hash());
    let cell = Cell::new(spec, spec.model, spec.epsilon, 0)?;
    let started = Instant::now();
    let run = execute(&cell, remote.unwrap_or(cell.provider.as_ref()))?;
    rep.time(&cell.label, started.elapsed());
    let s = &run.summary;
    rep.check(
        &format!("{}/precision_1", s.label),
        s.precision == 1.0,
        format!("precision {:.4} over {} reconstructed", s.precision, s.reconstructed),
    );
    bookkeeping_checks(&mut rep, s);
    record_attack(&mut rep, s);
    Ok((rep, run.result))
}

/// ReconSyn over models x epsilons x seeds, with the utility of a fresh
/// provider sample in each cell.
pub fn dp_sweep(spec: &ExperimentSpec) -> Result<RunReport> {
    let mut rep = RunReport::new(&format!("{}_dp_sweep", spec.name), spec.seed, spec.config_hash());
    let mut eps = spec.sweep_epsilons.clone();
    eps.sort_by(|a, b| b.total_cmp(a));
    eps.dedup();
    for &model in &spec.sweep_models {
        let mut mean_utility = Vec::new();
        for &e in &eps {
            let (mut recalls, mut utils) = (Vec::new(), Vec::new());
            for r in 0..spec.sweep_seeds as u64 {
                let cell = Cell::new(spec, model, e, r)?;
                let started = Instant::now();
                let run = execute(&cell, cell.provider.as_ref())?;
                rep.time(&cell.label, started.elapsed());
                let train = cell.train();
                let synth = cell
                    .provider
                    .sample(train.len(), Some(seed::derive(spec.seed, "utility", r)))?;
                let u = utility(train, &synth)?;
                rep.measure(&cell.label, "utility", u.combined());
                rep.measure(&cell.label, "marginal_diff", u.marginal_diff);
                rep.measure(&cell.label, "mi_diff", u.mi_diff);
                rep.utility(&cell.label, u);
                bookkeeping_checks(&mut rep, &run.summary);
                record_attack(&mut rep, &run.summary);
                recalls.push(run.summary.outlier_recall);
                utils.push(u.combined());
            }
            let group = format!("{}/eps={}", model.as_str(), eps_label(e));
            let mean_recall = mean(&recalls);
            let mu = mean(&utils);
            rep.measure(&group, "mean_outlier_recall", mean_recall);
            rep.measure(&group, "min_outlier_recall", recalls.iter().copied().fold(f64::INFINITY, f64::min));
            rep.measure(&group, "mean_utility", mu);
            rep.check(
                &format!("{group}/outlier_recall_at_least_0.95"),
                mean_recall >= 0.95,
                format!("mean {mean_recall:.3} over {} seeds: {}", recalls.len(), fmt_list(&recalls)),
            );
            mean_utility.push((e, mu));
        }
        // utility is a distance from train, so it should grow as epsilon shrinks
        let monotone = mean_utility.windows(2).all(|w| w[1].1 > w[0].1);
        rep.check(
            &format!("{}/utility_degrades_as_eps_decreases", model.as_str()),
            monotone,
            mean_utility
                .iter()
                .map(|(e, u)| format!("eps={}: {u:.4}", eps_label(*e)))
                .collect::<Vec<_>>()
                .join(", "),
        );
    }
    Ok(rep)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len().max(1) as f64
}

fn fmt_list(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ")
}

fn visible_matches(client: &Client, base: &Base) -> Result<Option<u64>> {
    let n = base.synth.len();
    Ok(client
        .metrics(&base.synth)?
        .scores
        .map(|s| (s.ims.share_synth * n as f64).round() as u64))
}

/// Membership inference on `targets` members drawn from train and as many
/// non-members from test rows absent from train. Each target costs two
/// metrics calls: one on the base sample and one with the target added.
pub fn membership_experiment(spec: &ExperimentSpec, model: ModelName, targets: usize, rep: u64) -> Result<RunReport> {
    let mut report = RunReport::new(&format!("{}_membership", spec.name), spec.seed, spec.config_hash());
    let cell = Cell::new(spec, model, spec.epsilon, rep)?;
    let started = Instant::now();
    let train = cell.train();
    let keys: HashSet<RecordKey> = train.keys().collect();
    let mut rng = seed::rng(seed::derive(spec.seed, "membership", rep));
    let mut members: Vec<usize> = (0..train.len()).collect();
    members.shuffle(&mut rng);
    let test = cell.provider.hidden_test();
    let mut outsiders: Vec<usize> = (0..test.len())
        .filter(|&i| !keys.contains(&RecordKey::of(&test.records()[i])))
        .collect();
    outsiders.shuffle(&mut rng);
    if outsiders.len() < targets || members.len() < targets {
        return config_err(format!("need {targets} members and non-members, found {}", outsiders.len()));
    }
    let client = Client::new(cell.provider.as_ref(), None);
    let base = passing_base(&client, train.len(), spec.max_padding_tries, seed::derive(spec.seed, "base", rep))?;
    let setup = client.ledger().metrics;
    let (mut scores, mut labels, mut undetermined) = (Vec::new(), Vec::new(), 0);
    let chosen = members[..targets]
        .iter()
        .map(|&i| (&train.records()[i], true))
        .chain(outsiders[..targets].iter().map(|&i| (&test.records()[i], false)));
    for (r, label) in chosen {
        let seen = visible_matches(&client, &base)?;
        let b = Base {
            synth: base.synth.clone(),
            matches: seen.unwrap_or(base.matches),
        };
        let m = difference_membership(&client, &b, r)?;
        undetermined += usize::from(m.undetermined);
        scores.push(f64::from(u8::from(m.member)));
        labels.push(label);
    }
    report.time(&cell.label, started.elapsed());
    let a = auc(&scores, &labels);
    let per_target = (client.ledger().metrics - setup) as f64 / scores.len() as f64;
    report.measure(&cell.label, "auc", a);
    report.measure(&cell.label, "metric_calls_per_target", per_target);
    report.measure(&cell.label, "undetermined", undetermined as f64);
    report.check(&format!("{}/auc_1", cell.label), a == 1.0, format!("AUC {a:.4}, {undetermined} undetermined"));
    report.check(
        &format!("{}/two_calls_per_target", cell.label),
        per_target == 2.0,
        format!("{per_target} metrics calls per target"),
    );
    Ok(report)
}

/// Attribute inference on `targets` train records. One categorical column
/// of each is hidden and completed by trying all `k` categories; the records
/// are chosen so that no other completion is in train.
pub fn attribute_experiment(spec: &ExperimentSpec, model: ModelName, targets: usize, rep: u64) -> Result<RunReport> {
    let mut report = RunReport::new(&format!("{}_attribute", spec.name), spec.seed, spec.config_hash());
    let cell = Cell::new(spec, model, spec.epsilon, rep)?;
    let started = Instant::now();
    let train = cell.train();
    let schema = train.schema().clone();
    let supports: Vec<Option<usize>> = schema
        .columns()
        .iter()
        .map(|c| match &c.kind {
            ColumnKind::Categorical { support } => Some(support.len()),
            ColumnKind::Continuous { .. } => None,
        })
        .collect();
    if supports.iter().all(Option::is_none) {
        return config_err("attribute inference needs a categorical column");
    }
    let keys: HashSet<RecordKey> = train.keys().collect();
    let mut rng = seed::rng(seed::derive(spec.seed, "attribute", rep));
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut rng);
    let mut picked = Vec::new();
    for (n, &i) in order.iter().enumerate() {
        if picked.len() == targets {
            break;
        }
        let r = &train.records()[i];
        let ncols = supports.len();
        let found = (0..ncols).map(|s| (n + s) % ncols).find(|&j| {
            supports[j].is_some_and(|k| {
                (0..k).filter(|&v| v as f64 != r[j]).all(|v| {
                    let mut alt = r.clone();
                    alt[j] = v as f64;
                    !keys.contains(&RecordKey::of(&alt))
                })
            })
        });
        if let Some(j) = found {
            picked.push((i, j));
        }
    }
    if picked.len() < targets {
        return config_err(format!("only {} train records have a unique completion", picked.len()));
    }
    let client = Client::new(cell.provider.as_ref(), None);
    let base = passing_base(&client, train.len(), spec.max_padding_tries, seed::derive(spec.seed, "base", rep))?;
    let setup = client.ledger().metrics;
    let (mut correct, mut expected_calls, mut low) = (0, 0, 0);
    for &(i, j) in &picked {
        let r = &train.records()[i];
        let k = supports[j].expect("picked columns are categorical");
        let candidates: Vec<f64> = (0..k).map(|v| v as f64).collect();
        let mut partial = r.clone();
        partial[j] = candidates[0];
        let guess = difference_attribute(&client, &base, &partial, j, &candidates)?;
        correct += usize::from(guess.value == r[j]);
        low += usize::from(guess.low_confidence);
        expected_calls += k as u64;
    }
    report.time(&cell.label, started.elapsed());
    let accuracy = correct as f64 / picked.len() as f64;
    let used = client.ledger().metrics - setup;
    report.measure(&cell.label, "accuracy", accuracy);
    report.measure(&cell.label, "metric_calls", used as f64);
    report.measure(&cell.label, "low_confidence", low as f64);
    report.check(
        &format!("{}/accuracy_1", cell.label),
        accuracy == 1.0,
        format!("{correct} of {} correct", picked.len()),
    );
    report.check(
        &format!("{}/k_calls_per_target", cell.label),
        used == expected_calls,
        format!("{used} metrics calls for {expected_calls} candidates"),
    );
    Ok(report)
}
