use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use proptest::prelude::*;
use sbpm_core::metrics::{
    ims_share, nn_distances, outlier_filter, percentile, percentile_of, privacy_report, similarity_filter,
    DistanceMetric, TEST_PERCENTILE,
};
use sbpm_core::mixture::{fit_gmm, smallest_clusters};
use sbpm_core::synthesis::{fit, sample, GeneratorKind};
use sbpm_core::tabular::{split, BinStrategy, ColumnSchema, Dataset, Discretizer, Schema};

fn cat_schema(cols: usize, card: usize) -> Arc<Schema> {
    let labels: Vec<String> = (0..card).map(|v| format!("v{v}")).collect();
    Arc::new(
        Schema::new(
            (0..cols)
                .map(|j| ColumnSchema::categorical(&format!("c{j}"), labels.clone()))
                .collect(),
        )
        .unwrap(),
    )
}

fn num_schema(cols: usize) -> Arc<Schema> {
    Arc::new(
        Schema::new(
            (0..cols)
                .map(|j| ColumnSchema::continuous(&format!("x{j}"), -10.0, 10.0))
                .collect(),
        )
        .unwrap(),
    )
}

fn cat_rows(rows: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec((0usize..4).prop_map(|v| v as f64), 3), rows)
}

fn num_rows(rows: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Vec<f64>>> {
    // coarse grid so ties and exact matches actually occur
    prop::collection::vec(prop::collection::vec((-30i32..=30).prop_map(|v| v as f64 / 10.0), 2), rows)
}

/// Two row sets sharing a random width of 1 to 10 columns.
fn paired<S: Strategy<Value = f64> + Clone + 'static>(
    value: S,
    a: std::ops::Range<usize>,
    b: std::ops::Range<usize>,
) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    (1usize..=10).prop_flat_map(move |cols| {
        (
            prop::collection::vec(prop::collection::vec(value.clone(), cols), a.clone()),
            prop::collection::vec(prop::collection::vec(value.clone(), cols), b.clone()),
        )
    })
}

fn cat_value() -> impl Strategy<Value = f64> + Clone {
    (0usize..4).prop_map(|v| v as f64)
}

fn num_value() -> impl Strategy<Value = f64> + Clone {
    (-30i32..=30).prop_map(|v| v as f64 / 10.0)
}

fn width(rows: &[Vec<f64>], empty: usize) -> usize {
    rows.first().map_or(empty, Vec::len)
}

fn cat_ds(rows: Vec<Vec<f64>>) -> Dataset {
    Dataset::new(cat_schema(width(&rows, 3), 4), rows, "prop").unwrap()
}

fn num_ds(rows: Vec<Vec<f64>>) -> Dataset {
    Dataset::new(num_schema(width(&rows, 2)), rows, "prop").unwrap()
}

/// All distances, sorted by (distance, reference index).
fn brute_nn(q: &[f64], reference: &[Vec<f64>], metric: DistanceMetric) -> (f64, f64, usize) {
    let mut all: Vec<(f64, usize)> = reference
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let d = match metric {
                DistanceMetric::Hamming => q.iter().zip(r).filter(|(a, b)| a != b).count() as f64,
                DistanceMetric::Euclidean => q.iter().zip(r).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(),
            };
            (d, i)
        })
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    (all[0].0, all[1].0, all[0].1)
}

fn multiset(rows: &[Vec<f64>]) -> HashMap<Vec<u64>, usize> {
    let mut m = HashMap::new();
    for r in rows {
        *m.entry(r.iter().map(|x| x.to_bits()).collect()).or_insert(0) += 1;
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn nn_matches_brute_force_hamming((q, r) in paired(cat_value(), 1..200, 2..200)) {
        let (q, r) = (cat_ds(q), cat_ds(r));
        let cols = q.n_cols() as f64;
        let got = nn_distances(&q, &r, DistanceMetric::Hamming).unwrap();
        for (row, res) in q.records().iter().zip(&got) {
            let (d1, d2, idx) = brute_nn(row, r.records(), DistanceMetric::Hamming);
            prop_assert_eq!((res.d1, res.d2, res.nn_index), (d1, d2, idx));
            prop_assert!(res.d1.fract() == 0.0 && res.d1 <= cols);
            prop_assert!((0.0..=1.0).contains(&res.ratio()));
        }
    }

    #[test]
    fn nn_matches_brute_force_euclidean((q, r) in paired(num_value(), 1..200, 2..200)) {
        let (q, r) = (num_ds(q), num_ds(r));
        let got = nn_distances(&q, &r, DistanceMetric::Euclidean).unwrap();
        for (row, res) in q.records().iter().zip(&got) {
            let (d1, d2, idx) = brute_nn(row, r.records(), DistanceMetric::Euclidean);
            prop_assert!((res.d1 - d1).abs() <= 1e-9 && (res.d2 - d2).abs() <= 1e-9);
            // the grid makes distance ties common; the lowest index must win
            prop_assert_eq!(res.nn_index, idx);
            prop_assert!(res.d1 <= res.d2);
        }
    }

    #[test]
    fn ims_share_counts_matches((t, s) in paired(cat_value(), 1..200, 1..200)) {
        let (t, s) = (cat_ds(t), cat_ds(s));
        let hits = s.records().iter().filter(|row| t.records().contains(row)).count();
        prop_assert_eq!(ims_share(&t, &s).unwrap(), hits as f64 / s.len() as f64);
    }

    #[test]
    fn ims_share_counts_matches_euclidean((t, s) in paired(num_value(), 1..200, 1..200)) {
        let (t, s) = (num_ds(t), num_ds(s));
        let hits = s.records().iter().filter(|row| t.records().contains(row)).count();
        prop_assert_eq!(ims_share(&t, &s).unwrap(), hits as f64 / s.len() as f64);
    }

    #[test]
    fn percentile_interpolates_order_statistics(mut v in prop::collection::vec(-1e3f64..1e3, 1..300), p in 0.0f64..=100.0) {
        v.sort_by(f64::total_cmp);
        let h = (v.len() - 1) as f64 * p / 100.0;
        let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
        let want = v[lo] * (1.0 - (h - lo as f64)) + v[hi] * (h - lo as f64);
        prop_assert!((percentile(&v, p) - want).abs() <= 1e-9 * (1.0 + want.abs()));
    }

    #[test]
    fn percentile_never_drops_when_appending_values_above_the_max(
        v in prop::collection::vec(0.0f64..100.0, 1..200),
        extra in prop::collection::vec(0.0f64..100.0, 1..50),
    ) {
        let before = percentile_of(&v, TEST_PERCENTILE);
        let top = v.iter().copied().fold(f64::MIN, f64::max);
        let mut w = v.clone();
        w.extend(extra.into_iter().map(|x| top + x));
        prop_assert!(percentile_of(&w, TEST_PERCENTILE) >= before);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_is_a_multiset_partition(rows in cat_rows(0usize..100), seed in any::<u64>()) {
        let mut rows = rows;
        if rows.len() % 2 == 1 { rows.pop(); }
        let ds = cat_ds(rows);
        let (a, b) = split(&ds, seed).unwrap();
        prop_assert_eq!(a.len(), b.len());
        let mut union = a.records().to_vec();
        union.extend_from_slice(b.records());
        prop_assert_eq!(multiset(&union), multiset(ds.records()));
        let again = split(&ds, seed).unwrap();
        prop_assert_eq!(again.0.records(), a.records());
    }

    #[test]
    fn test_as_synth_always_passes(rows in cat_rows(4usize..120), seed in any::<u64>()) {
        let mut rows = rows;
        if rows.len() % 2 == 1 { rows.pop(); }
        let (train, test) = split(&cat_ds(rows), seed).unwrap();
        let rep = privacy_report(&train, &test, &test, DistanceMetric::Hamming).unwrap();
        prop_assert!(rep.all_pass, "{:?}", rep);
    }

    #[test]
    fn test_as_synth_always_passes_euclidean(rows in num_rows(4usize..120), seed in any::<u64>()) {
        let mut rows = rows;
        if rows.len() % 2 == 1 { rows.pop(); }
        let (train, test) = split(&num_ds(rows), seed).unwrap();
        let rep = privacy_report(&train, &test, &test, DistanceMetric::Euclidean).unwrap();
        prop_assert!(rep.all_pass, "{:?}", rep);
        prop_assert!((0.0..=1.0).contains(&rep.nndr.pct5_synth) && (0.0..=1.0).contains(&rep.nndr.mean_synth));
    }

    #[test]
    fn filters_are_idempotent_subsets(t in num_rows(2usize..80), s in num_rows(0usize..80), tau in 0.0f64..1.0) {
        let (t, s) = (num_ds(t), num_ds(s));
        let m = DistanceMetric::Euclidean;
        let once = similarity_filter(&t, &s, tau, m).unwrap();
        prop_assert!(once.records().iter().all(|r| s.records().contains(r)));
        let twice = similarity_filter(&t, &once, tau, m).unwrap();
        prop_assert_eq!(twice.records(), once.records());
        let once = outlier_filter(&t, &s, 95.0, m).unwrap();
        prop_assert!(once.records().iter().all(|r| s.records().contains(r)));
        let twice = outlier_filter(&t, &once, 95.0, m).unwrap();
        prop_assert_eq!(twice.records(), once.records());
    }

    #[test]
    fn smallest_clusters_is_a_maximum_count_subset(sizes in prop::collection::vec(0usize..500, 1..=10), budget in 0usize..2000) {
        let chosen = smallest_clusters(&sizes, budget);
        let total: usize = chosen.iter().map(|&c| sizes[c]).sum();
        prop_assert!(total <= budget);
        let k = sizes.len();
        let best = (0u32..1 << k)
            .filter(|m| (0..k).filter(|c| m >> c & 1 == 1).map(|c| sizes[c]).sum::<usize>() <= budget)
            .map(|m| m.count_ones() as usize)
            .max()
            .unwrap();
        prop_assert_eq!(chosen.len(), best);
        // no excluded cluster is smaller than every included one
        if let Some(max_in) = chosen.iter().map(|&c| sizes[c]).max() {
            for c in (0..k).filter(|c| !chosen.contains(c)) {
                prop_assert!(sizes[c] >= max_in);
            }
        }
    }

    #[test]
    fn discretization_preserves_order_and_support(
        xs in prop::collection::vec(-10.0f64..10.0, 2..200),
        probes in prop::collection::vec(-10.0f64..10.0, 2..50),
        bins in 2usize..40,
        quantile in any::<bool>(),
    ) {
        let ds = Dataset::new(num_schema(1), xs.iter().map(|&x| vec![x]).collect(), "d").unwrap();
        let strategy = if quantile { BinStrategy::Quantile } else { BinStrategy::Uniform };
        let disc = Discretizer::fit(&ds, strategy, bins).unwrap();
        let mut probes = probes;
        probes.sort_by(f64::total_cmp);
        let assigned: Vec<usize> = probes.iter().map(|&x| disc.bin(0, x)).collect();
        prop_assert!(assigned.windows(2).all(|w| w[0] <= w[1]));
        let out = disc.apply(&ds.extended(probes.iter().map(|&x| vec![x])).unwrap()).unwrap();
        let card = out.schema().columns()[0].cardinality().unwrap();
        prop_assert!(card <= bins);
        prop_assert!(out.records().iter().all(|r| (r[0] as usize) < card));
    }

    #[test]
    fn categorical_models_stay_in_schema(rows in cat_rows(1usize..100), seed in any::<u64>()) {
        let ds = cat_ds(rows);
        for kind in [GeneratorKind::Random, GeneratorKind::Independent, GeneratorKind::PrivbayesLite { max_parents: 2 }] {
            let m = fit(&kind, &ds, None, seed).unwrap();
            // Dataset::new re-validates every value
            let s = sample(&m, 50, seed);
            prop_assert!(Dataset::new(ds.schema_arc().clone(), s.records().to_vec(), "check").is_ok());
        }
    }
}

#[test]
fn em_is_monotone_and_responsibilities_normalised() {
    for seed in 0..100u64 {
        let ds = if seed % 2 == 0 {
            sbpm_core::tabular::gen_gauss(2, 300, seed)
        } else {
            sbpm_core::tabular::gen_censuslite(300, seed)
        };
        let k = 2 + (seed % 9) as usize;
        let gmm = fit_gmm(&ds, k, 100, 1e-8, seed).unwrap();
        for w in gmm.log_likelihood_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0), "seed {seed}: {} then {}", w[0], w[1]);
        }
        assert!((gmm.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(gmm.variances.iter().flatten().all(|&v| v >= sbpm_core::mixture::VARIANCE_FLOOR));
        for r in gmm.responsibilities(&ds).unwrap() {
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert_eq!(gmm.predict(&ds).unwrap(), gmm.predict(&ds).unwrap());
    }
}

#[test]
fn smallest_clusters_ties_prefer_lower_id() {
    assert_eq!(smallest_clusters(&[5, 5, 5], 10), BTreeSet::from([0, 1]));
}
