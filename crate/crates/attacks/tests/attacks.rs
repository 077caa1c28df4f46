use sbpm_attacks::difference::{difference_attribute, difference_membership, passing_base};
use sbpm_attacks::distance::{bootstrap_padding, extract_distance};
use sbpm_attacks::evaluate::{auc, evaluate_attack, evaluate_rows, verify_history};
use sbpm_attacks::locator::{outliers_locator, LocatorConfig, LocatorStrategy, OutliersLocator};
use sbpm_attacks::reconsyn::{
    reconsyn, sample_attack, sample_attack_one_call, search_attack, AttackConfig, AttackResult, AttackState, Phase,
    TargetMode,
};
use sbpm_attacks::{AttackError, CallLedger, Client};
use sbpm_core::metrics::{DistanceMetric, Reference};
use sbpm_core::synthesis::GeneratorKind;
use sbpm_core::tabular::{gen_censuslite, gen_gauss, gen_gauss_grid, label_outliers, Dataset, OutlierRule, Record};
use sbpm_provider::{Access, Audited, Provider, ProviderApi, ProviderConfig};

fn census(kind: GeneratorKind, seed: u64) -> Provider {
    Provider::new(&gen_censuslite(6000, seed), &ProviderConfig::new(kind, DistanceMetric::Hamming, seed)).unwrap()
}

fn gauss_oracle(seed: u64) -> Provider {
    let data = gen_gauss_grid(2, 2000, 0.1, seed);
    let kind = GeneratorKind::Oracle { dim: 2, step: Some(0.1) };
    Provider::new(&data, &ProviderConfig::new(kind, DistanceMetric::Euclidean, seed)).unwrap()
}

fn d1(p: &Provider, row: &Record) -> f64 {
    let q = p.hidden_train().filter(|_, _| false).extended([row.clone()]).unwrap();
    Reference::new(p.hidden_train(), p.metric()).unwrap().nearest(&q).unwrap()[0]
}

fn stats(p: &Provider) -> CallLedger {
    let s = p.stats().unwrap();
    CallLedger {
        sample: s.sample_calls,
        metrics: s.metric_calls,
    }
}

/// The first CensusLite cell at Hamming distance `k` from the train data.
fn at_distance(p: &Provider, k: f64) -> Option<Record> {
    let cards = [8, 6, 5, 5, 2, 2];
    let total: usize = cards.iter().product();
    let cells: Vec<Record> = (0..total)
        .map(|mut c| {
            cards
                .iter()
                .map(|&n| {
                    let v = c % n;
                    c /= n;
                    v as f64
                })
                .collect()
        })
        .collect();
    let q = p.hidden_train().filter(|_, _| false).extended(cells.clone()).unwrap();
    let d = Reference::new(p.hidden_train(), p.metric()).unwrap().nearest(&q).unwrap();
    cells.into_iter().zip(d).find(|(_, d)| *d == k).map(|(c, _)| c)
}

#[test]
fn membership_of_train_and_unseen_records() {
    let p = census(GeneratorKind::PrivbayesLite { max_parents: 2 }, 3);
    let client = Client::new(&p, None);
    let base = passing_base(&client, 3000, 10, 3).unwrap();
    let member = p.hidden_train().records()[7].clone();
    let before = client.ledger().metrics;
    let a = difference_membership(&client, &base, &member).unwrap();
    assert!(a.member && !a.undetermined);
    assert_eq!(client.ledger().metrics - before, 1, "one call on top of the base");
    assert_eq!(difference_membership(&client, &base, &member).unwrap(), a);

    let g = gauss_oracle(5);
    let client = Client::new(&g, None);
    let base = passing_base(&client, 1000, 10, 5).unwrap();
    // nothing in the train data lies near the clamping bound
    let far = vec![9.9, -9.9];
    assert!(!difference_membership(&client, &base, &far).unwrap().member);
}

#[test]
fn membership_separates_members_perfectly() {
    for kind in [GeneratorKind::Independent, GeneratorKind::Random, GeneratorKind::PrivbayesLite { max_parents: 2 }] {
        let p = census(kind.clone(), 8);
        let client = Client::new(&p, None);
        let base = passing_base(&client, 3000, 10, 8).unwrap();
        let train = Reference::new(p.hidden_train(), DistanceMetric::Hamming).unwrap();
        let members: Vec<Record> = p.hidden_train().records().iter().step_by(150).take(20).cloned().collect();
        let outsiders: Vec<Record> = p
            .hidden_test()
            .records()
            .iter()
            .filter(|r| !train.contains(r))
            .take(20)
            .cloned()
            .collect();
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for (rows, label) in [(&members, true), (&outsiders, false)] {
            for r in rows.iter() {
                let m = difference_membership(&client, &base, r).unwrap();
                scores.push(if m.member { 1.0 } else { 0.0 });
                labels.push(label);
            }
        }
        assert_eq!(auc(&scores, &labels), 1.0, "{}", kind.name());
        assert_eq!(client.ledger().metrics, 1 + 40 + base_retries(&client));
    }
}

fn base_retries(client: &Client) -> u64 {
    // every failed base attempt costs one extra metrics call per sample call
    client.ledger().sample - 1
}

#[test]
fn attribute_inference_picks_the_true_value() {
    let p = census(GeneratorKind::Independent, 4);
    let client = Client::new(&p, None);
    let base = passing_base(&client, 3000, 10, 4).unwrap();
    let truth = p.hidden_train().records()[11].clone();
    let before = client.ledger().metrics;
    // sex has two categories
    let g = difference_attribute(&client, &base, &truth, 4, &[0.0, 1.0]).unwrap();
    assert_eq!(g.value, truth[4]);
    assert!(!g.low_confidence);
    assert_eq!(client.ledger().metrics - before, 2);

    let age = difference_attribute(&client, &base, &truth, 0, &(0..8).map(f64::from).collect::<Vec<_>>()).unwrap();
    assert_eq!(age.value, truth[0]);
    assert_eq!(client.ledger().metrics - before, 10);
}

#[test]
fn attribute_inference_without_any_member_is_flagged() {
    let g = gauss_oracle(2);
    let client = Client::new(&g, None);
    let base = passing_base(&client, 1000, 10, 2).unwrap();
    let guess = difference_attribute(&client, &base, &vec![9.9, 0.0], 1, &[9.8, -9.8, 9.7]).unwrap();
    assert_eq!(guess.index, 0);
    assert!(guess.low_confidence);
    assert!(difference_attribute(&client, &base, &vec![0.0, 0.0], 1, &[]).is_err());
}

#[test]
fn padding_distance_is_exact() {
    for seed in 0..3 {
        let p = census(GeneratorKind::Independent, seed);
        let client = Client::new(&p, None);
        let pad = bootstrap_padding(&client, 100, 1000, 200, seed).unwrap();
        assert!(pad.valid);
        assert_eq!(pad.distance, d1(&p, &pad.record));
        assert!(pad.distance > 0.0, "exact matches fail the identical-match share");
    }
    let g = gauss_oracle(1);
    let client = Client::new(&g, None);
    let pad = bootstrap_padding(&client, 100, 1000, 200, 1).unwrap();
    assert!((pad.distance - d1(&g, &pad.record)).abs() < 1e-12);
}

#[test]
fn replayed_train_rows_never_make_valid_padding() {
    // continuous data: the test half shares no row with the train half
    let data = gen_gauss(2, 400, 3);
    let p = Provider::new(&data, &ProviderConfig::new(GeneratorKind::Replay, DistanceMetric::Euclidean, 3)).unwrap();
    let client = Client::new(&p, None);
    assert!(matches!(bootstrap_padding(&client, 50, 100, 5, 3), Err(AttackError::NoValidPadding(5))));
}

#[test]
fn extracted_distances_match_brute_force() {
    let p = census(GeneratorKind::Independent, 6);
    let client = Client::new(&p, None);
    let pad = bootstrap_padding(&client, 100, 1000, 200, 6).unwrap();
    let member = p.hidden_train().records()[0].clone();
    assert_eq!(extract_distance(&client, &pad, &member).unwrap(), 0.0);
    assert_eq!(extract_distance(&client, &pad, &pad.record).unwrap(), pad.distance);
    let mut seen = 0;
    for k in [1.0, 2.0, 3.0] {
        if let Some(r) = at_distance(&p, k) {
            assert_eq!(extract_distance(&client, &pad, &r).unwrap(), k);
            seen += 1;
        }
    }
    assert!(seen >= 2);
    let before = client.ledger().metrics;
    extract_distance(&client, &pad, &member).unwrap();
    assert_eq!(client.ledger().metrics - before, 1);
}

#[test]
fn hamming_three_with_unit_padding() {
    // the arithmetic identity for m = 100, d_pad = 1, d = 3
    let mean = (100.0 * 1.0 + 3.0) / 101.0;
    assert_eq!((mean * 101.0 - 100.0 * 1.0_f64).round(), 3.0);
}

#[test]
fn too_few_copies_are_rejected() {
    let cfg = AttackConfig {
        padding_copies: 10,
        ..Default::default()
    };
    assert!(matches!(cfg.validate(), Err(AttackError::Config(_))));
    for bad in [
        AttackConfig {
            rounds: 0,
            ..Default::default()
        },
        AttackConfig {
            search_depth: 0,
            ..Default::default()
        },
    ] {
        assert!(bad.validate().is_err());
    }
}

fn density_locator() -> LocatorConfig {
    LocatorConfig {
        strategy: LocatorStrategy::LowDensity { margin: 1.5 },
        ..Default::default()
    }
}

#[test]
fn locator_covers_gauss_tail() {
    let p = gauss_oracle(1);
    let client = Client::new(&p, None);
    let n_out = label_outliers(p.hidden_train(), &OutlierRule::Radius { r: 2.15 }).unwrap().len();
    assert_eq!(n_out, 108);
    let loc = outliers_locator(&client, 1000, n_out, &density_locator(), 1).unwrap();
    assert_eq!(client.ledger(), CallLedger { sample: 1, metrics: 0 });
    let fresh = client.sample(20_000, Some(99)).unwrap();
    let tail: Vec<&Record> = fresh.records().iter().filter(|r| r[0].hypot(r[1]) > 2.15).collect();
    let covered = tail.iter().filter(|r| loc.accepts(r)).count();
    assert!(covered as f64 >= 0.8 * tail.len() as f64, "{covered}/{}", tail.len());
}

#[test]
fn empty_outlier_budget_selects_nothing() {
    let p = gauss_oracle(2);
    let client = Client::new(&p, None);
    for cfg in [LocatorConfig::default(), density_locator()] {
        let loc = outliers_locator(&client, 1000, 0, &cfg, 2).unwrap();
        assert!(loc.clusters().is_empty());
        assert!(p.hidden_train().records().iter().all(|r| !loc.accepts(r)));
    }
    assert!(OutliersLocator::any().accepts(&[1.0, 2.0]));
}

#[test]
fn oracle_sample_attack_reconstructs_gauss_outliers() {
    let p = gauss_oracle(1);
    let client = Client::new(&p, None);
    let outliers = label_outliers(p.hidden_train(), &OutlierRule::Radius { r: 2.15 }).unwrap();
    let cfg = AttackConfig {
        n_train: 1000,
        n_out: outliers.len(),
        rounds: 1000,
        locator: density_locator(),
        seed: 1,
        ..Default::default()
    };
    let (result, history) = reconsyn(&client, &cfg).unwrap();
    let ev = evaluate_attack(&result, p.hidden_train(), &outliers.rows(p.hidden_train())).unwrap();
    assert!(ev.recall >= 0.90, "recall {}", ev.recall);
    assert_eq!(ev.precision, 1.0);
    assert!(verify_history(&history, p.hidden_train(), DistanceMetric::Euclidean).unwrap().is_empty());
    for row in result.rows() {
        assert_eq!(d1(&p, row), 0.0);
    }
    assert_eq!(result.calls_used, stats(&p));
    assert!(result.trace.iter().all(|t| t.phase == Phase::Sample), "no search on continuous data");
    assert!(result.trace.windows(2).all(|w| w[0].reconstructed_total <= w[1].reconstructed_total));
}

#[test]
fn vacuous_rounds_reconstruct_nothing() {
    let p = census(GeneratorKind::Independent, 2);
    let client = Client::new(&p, None);
    let cfg = AttackConfig {
        n_train: 3000,
        n_out: 0,
        rounds: 5,
        seed: 2,
        ..Default::default()
    };
    let loc = outliers_locator(&client, cfg.n_train, 0, &cfg.locator, 2).unwrap();
    let pad = bootstrap_padding(&client, 100, 1000, 200, 2).unwrap();
    let mut state = AttackState::new();
    sample_attack(&client, &loc, &pad, &cfg, &mut state).unwrap();
    assert!(state.reconstructed.is_empty());
    assert!(state.history.is_empty());
    assert_eq!(state.trace.len(), 5);
}

#[test]
fn one_call_against_a_memorising_model() {
    let p = census(GeneratorKind::Replay, 4);
    let client = Client::new(&p, None);
    let claim = sample_attack_one_call(&client, &OutliersLocator::any(), 3000, 4).unwrap();
    assert_eq!(client.ledger(), CallLedger { sample: 1, metrics: 1 });
    let ev = evaluate_rows(&claim.claimed, p.hidden_train(), p.hidden_train(), client.ledger()).unwrap();
    assert!(ev.recall > 0.0);
}

#[test]
fn one_call_with_zero_share_claims_nothing() {
    let data = gen_gauss(2, 2000, 5);
    let kind = GeneratorKind::Oracle { dim: 2, step: None };
    let p = Provider::new(&data, &ProviderConfig::new(kind, DistanceMetric::Euclidean, 5)).unwrap();
    let client = Client::new(&p, None);
    let claim = sample_attack_one_call(&client, &OutliersLocator::any(), 1000, 5).unwrap();
    assert!(claim.claimed.is_empty());
    assert_eq!(client.ledger().metrics, 1);
}

#[test]
fn search_fixes_a_single_column() {
    let p = census(GeneratorKind::Independent, 7);
    let client = Client::new(&p, None);
    let pad = bootstrap_padding(&client, 100, 1000, 200, 7).unwrap();
    let near = at_distance(&p, 1.0).unwrap();
    let mut state = AttackState::new();
    let cfg = AttackConfig {
        search_depth: 1,
        ..Default::default()
    };
    let d = extract_distance(&client, &pad, &near).unwrap();
    assert_eq!(d, 1.0);
    state.history.insert(near.clone(), d);
    let before = client.ledger().metrics;
    search_attack(&client, &OutliersLocator::any(), &pad, p.schema(), &cfg, &mut state).unwrap();
    let spent = client.ledger().metrics - before;
    assert!(!state.reconstructed.is_empty());
    let train = Reference::new(p.hidden_train(), DistanceMetric::Hamming).unwrap();
    assert!(state.reconstructed.rows().iter().all(|r| train.contains(r)));
    // the neighbours, then at most every support value of the open columns
    assert!(spent <= 6 + 8 + 6 + 5 + 5 + 2 + 2, "{spent} calls");
    assert!(verify_history(&state.history, p.hidden_train(), DistanceMetric::Hamming).unwrap().is_empty());
}

#[test]
fn search_skips_records_beyond_depth() {
    let p = census(GeneratorKind::Independent, 7);
    let client = Client::new(&p, None);
    let pad = bootstrap_padding(&client, 100, 1000, 200, 7).unwrap();
    let far = at_distance(&p, 2.0).unwrap();
    let mut state = AttackState::new();
    state.history.insert(far, 2.0);
    let before = client.ledger();
    let cfg = AttackConfig {
        search_depth: 1,
        ..Default::default()
    };
    search_attack(&client, &OutliersLocator::any(), &pad, p.schema(), &cfg, &mut state).unwrap();
    assert_eq!(client.ledger(), before);
    assert!(state.reconstructed.is_empty());
}

#[test]
fn search_needs_categorical_data() {
    let p = gauss_oracle(1);
    let client = Client::new(&p, None);
    let pad = bootstrap_padding(&client, 100, 1000, 200, 1).unwrap();
    let mut state = AttackState::new();
    let r = search_attack(&client, &OutliersLocator::any(), &pad, p.schema(), &AttackConfig::default(), &mut state);
    assert!(matches!(r, Err(AttackError::Config(_))));
}

#[test]
fn any_record_mode_only_talks_through_the_api() {
    let p = Audited::new(census(GeneratorKind::Independent, 9));
    let client = Client::new(&p, None);
    let cfg = AttackConfig {
        n_train: 3000,
        n_out: 300,
        rounds: 50,
        target: TargetMode::AnyRecord,
        seed: 9,
        ..Default::default()
    };
    let (result, history) = reconsyn(&client, &cfg).unwrap();
    let inner = p.inner();
    assert_eq!(result.calls_used, stats(inner));
    let seen = p.seen();
    assert_eq!((seen.sample_calls, seen.metric_calls), (result.calls_used.sample, result.calls_used.metrics));
    assert!(p.log().iter().all(|a| !matches!(a, Access::Stats)));
    let ev = evaluate_attack(&result, inner.hidden_train(), inner.hidden_train()).unwrap();
    assert_eq!(ev.precision, 1.0);
    assert!(ev.recall > 0.3);
    assert!(verify_history(&history, inner.hidden_train(), DistanceMetric::Hamming).unwrap().is_empty());
    assert!(result.trace.iter().all(|t| t.phase == Phase::Sample));
}

#[test]
fn budget_truncates_with_a_partial_result() {
    let p = census(GeneratorKind::Independent, 1);
    let client = Client::new(&p, Some(400));
    let cfg = AttackConfig {
        n_train: 3000,
        n_out: 300,
        rounds: 100,
        call_budget: Some(400),
        seed: 1,
        ..Default::default()
    };
    let (result, _) = reconsyn(&client, &cfg).unwrap();
    assert!(result.truncated);
    assert_eq!(result.calls_used.total(), 400);
    assert_eq!(stats(&p).total(), 400);
}

#[test]
fn one_call_mode_uses_two_sample_calls_and_one_metrics_call() {
    let p = census(GeneratorKind::Replay, 2);
    let client = Client::new(&p, None);
    let cfg = AttackConfig {
        n_train: 3000,
        n_out: 300,
        one_call: true,
        seed: 2,
        ..Default::default()
    };
    let (result, history) = reconsyn(&client, &cfg).unwrap();
    assert_eq!(result.calls_used, CallLedger { sample: 2, metrics: 1 });
    assert!(history.is_empty());
    assert_eq!(result.trace.len(), 1);
}

#[test]
fn result_json_round_trip() {
    let p = census(GeneratorKind::Independent, 3);
    let client = Client::new(&p, None);
    let cfg = AttackConfig {
        n_train: 3000,
        n_out: 300,
        rounds: 20,
        seed: 3,
        ..Default::default()
    };
    let (result, _) = reconsyn(&client, &cfg).unwrap();
    let json = serde_json::to_string(&result).unwrap();
    let back: AttackResult = serde_json::from_str(&json).unwrap();
    assert_eq!(back.reconstructed, result.reconstructed);
    assert_eq!(back.trace, result.trace);
    assert_eq!(back.decode_rows(p.schema()).unwrap(), result.rows());
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert!(v["reconstructed"][0][0].is_string(), "categorical values are rendered as labels");
}

#[test]
fn same_seed_same_result() {
    let run = || {
        let p = census(GeneratorKind::PrivbayesLite { max_parents: 2 }, 5);
        let client = Client::new(&p, None);
        let cfg = AttackConfig {
            n_train: 3000,
            n_out: 300,
            rounds: 30,
            seed: 5,
            ..Default::default()
        };
        serde_json::to_string(&reconsyn(&client, &cfg).unwrap().0).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn evaluation_conventions() {
    let p = census(GeneratorKind::Independent, 1);
    let train = p.hidden_train();
    let targets: Dataset = train.select(&[0, 1, 2]);
    let ev = evaluate_rows(targets.records(), train, &targets, CallLedger::default()).unwrap();
    assert_eq!((ev.recall, ev.precision, ev.precision_by_convention), (1.0, 1.0, false));
    let ev = evaluate_rows(&[], train, &targets, CallLedger::default()).unwrap();
    assert_eq!((ev.recall, ev.precision, ev.precision_by_convention), (0.0, 1.0, true));
    let none = train.filter(|_, _| false);
    assert!(matches!(evaluate_rows(&[], train, &none, CallLedger::default()), Err(AttackError::NoTargets)));
    assert_eq!(auc(&[0.9, 0.1], &[true, false]), 1.0);
    assert_eq!(auc(&[0.5, 0.5], &[true, false]), 0.5);
}
