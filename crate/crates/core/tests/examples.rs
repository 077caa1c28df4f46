use std::sync::Arc;

use sbpm_core::metrics::{
    ims_share, nn_distances, outlier_filter, privacy_report, similarity_filter, DistanceMetric,
};
use sbpm_core::mixture::{cluster_sizes, fit_gmm, smallest_clusters};
use sbpm_core::synthesis::{fit, sample, utility, DpBudget, GeneratorKind};
use sbpm_core::tabular::{
    gen_censuslite, gen_gauss, label_outliers, parse_csv, read_csv, split, write_csv, BinStrategy, ColumnSchema,
    Dataset, Discretizer, OutlierRule, Schema,
};
use sbpm_core::Error;

fn cats(rows: &[&[&str]]) -> Dataset {
    let schema = Arc::new(
        Schema::new(
            (0..rows[0].len())
                .map(|j| ColumnSchema::categorical(&format!("c{j}"), ["a", "b", "c", "d", "x", "y", "z"]))
                .collect(),
        )
        .unwrap(),
    );
    let code = |s: &str| ["a", "b", "c", "d", "x", "y", "z"].iter().position(|l| *l == s).unwrap() as f64;
    Dataset::new(schema, rows.iter().map(|r| r.iter().map(|s| code(s)).collect()).collect(), "t").unwrap()
}

fn line(xs: &[f64]) -> Dataset {
    let schema = Arc::new(Schema::new(vec![ColumnSchema::continuous("x", -100.0, 100.0)]).unwrap());
    Dataset::new(schema, xs.iter().map(|&x| vec![x]).collect(), "line").unwrap()
}

#[test]
fn hamming_three_row_reference() {
    let q = cats(&[&["a", "b", "c"]]);
    let r = cats(&[&["a", "b", "c"], &["a", "b", "d"], &["x", "y", "z"]]);
    let nn = nn_distances(&q, &r, DistanceMetric::Hamming).unwrap();
    assert_eq!((nn[0].d1, nn[0].d2), (0.0, 1.0));
}

#[test]
fn euclidean_line() {
    let nn = nn_distances(&line(&[0.0]), &line(&[1.0, -2.0]), DistanceMetric::Euclidean).unwrap();
    assert_eq!((nn[0].d1, nn[0].d2, nn[0].nn_index), (1.0, 2.0, 0));
}

#[test]
fn self_query_has_zero_d1() {
    let g = gen_gauss(2, 200, 1);
    assert!(nn_distances(&g, &g, DistanceMetric::Euclidean).unwrap().iter().all(|r| r.d1 == 0.0));
    assert!(matches!(
        nn_distances(&g, &g.select(&[0]), DistanceMetric::Euclidean),
        Err(Error::TooFewRows { .. })
    ));
}

#[test]
fn ims_share_examples() {
    let g = gen_gauss(2, 100, 2);
    assert_eq!(ims_share(&g, &g).unwrap(), 1.0);
    assert_eq!(ims_share(&g, &gen_gauss(2, 100, 3)).unwrap(), 0.0);
    let mut rows = gen_gauss(2, 100, 4).into_records();
    rows.push(g.records()[7].clone());
    let s = Dataset::new(g.schema_arc().clone(), rows, "s").unwrap();
    assert_eq!(ims_share(&g, &s).unwrap(), 1.0 / 101.0);
}

#[test]
fn report_rules() {
    let (train, test) = split(&gen_gauss(2, 2000, 5), 5).unwrap();
    let rep = privacy_report(&train, &test, &test, DistanceMetric::Euclidean).unwrap();
    assert!(rep.all_pass);
    let rep = privacy_report(&train, &test, &train, DistanceMetric::Euclidean).unwrap();
    assert_eq!((rep.ims.share_synth, rep.ims.share_test), (1.0, 0.0));
    assert!(!rep.ims.pass && !rep.all_pass);
    let json = serde_json::to_value(rep).unwrap();
    for key in ["ims", "dcr", "nndr", "all_pass"] {
        assert!(json.get(key).is_some(), "{key}");
    }
}

#[test]
fn filter_examples() {
    let (train, _) = split(&gen_gauss(2, 400, 6), 6).unwrap();
    let m = DistanceMetric::Euclidean;
    assert!(similarity_filter(&train, &train, 0.0, m).unwrap().is_empty());
    let other = gen_gauss(2, 100, 7);
    assert_eq!(similarity_filter(&train, &other, 0.0, m).unwrap().records(), other.records());
    let sub = train.select(&[0, 3, 9]);
    assert_eq!(outlier_filter(&train, &sub, 95.0, m).unwrap().records(), sub.records());
    let far = train.extended([vec![9.5, -9.5]]).unwrap().select(&[train.len()]);
    assert!(outlier_filter(&train, &far, 95.0, m).unwrap().is_empty());
}

#[test]
fn generator_shapes() {
    let g = gen_gauss(2, 2000, 8);
    assert_eq!((g.len(), g.n_cols()), (2000, 2));
    assert!(gen_gauss(2, 0, 8).is_empty());
    for j in 0..2 {
        let xs: Vec<f64> = g.records().iter().map(|r| r[j]).collect();
        let mean = xs.iter().sum::<f64>() / 2000.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 1999.0;
        assert!(mean.abs() <= 0.1 && (var - 1.0).abs() <= 0.15, "{mean} {var}");
    }
    let c = gen_censuslite(6000, 8);
    assert_eq!((c.len(), c.n_cols()), (6000, 6));
    assert!(split(&gen_gauss(1, 3, 0), 0).is_err());
    let (a, b) = split(&g, 1).unwrap();
    assert_eq!((a.len(), b.len()), (1000, 1000));
}

#[test]
fn radius_outliers() {
    let (train, _) = split(&gen_gauss(2, 2000, 9), 9).unwrap();
    let out = label_outliers(&train, &OutlierRule::Radius { r: 2.15 }).unwrap();
    let expected = 1000.0 * (-2.15f64 * 2.15 / 2.0).exp();
    assert!((out.len() as f64 - expected).abs() <= 30.0, "{}", out.len());
    assert_eq!(label_outliers(&train, &OutlierRule::Radius { r: 0.0 }).unwrap().len(), 1000);
    assert!(label_outliers(&gen_censuslite(10, 0), &OutlierRule::Radius { r: 1.0 }).is_err());
}

#[test]
fn greedy_cluster_selection() {
    let sizes = [500, 300, 120, 80];
    assert_eq!(smallest_clusters(&sizes, 200).into_iter().collect::<Vec<_>>(), vec![2, 3]);
    assert!(smallest_clusters(&sizes, 0).is_empty());
    assert_eq!(smallest_clusters(&sizes, 1000).len(), 4);
}

#[test]
fn mixture_examples() {
    let g = gen_gauss(2, 500, 10);
    let one = fit_gmm(&g, 1, 50, 1e-9, 0).unwrap();
    for j in 0..2 {
        let mean = g.records().iter().map(|r| r[j]).sum::<f64>() / 500.0;
        assert!((one.means[0][j] - mean).abs() < 1e-9);
    }
    assert_eq!(one.weights, vec![1.0]);
    let ten = fit_gmm(&g, 10, 200, 1e-6, 0).unwrap();
    assert_eq!(cluster_sizes(&ten.fit_labels, 10).iter().sum::<usize>(), 500);
    assert_eq!(ten.predict(&g).unwrap(), ten.fit_labels);
    assert!(fit_gmm(&g.select(&[0, 1]), 3, 10, 1e-6, 0).is_err());
}

#[test]
fn discretizer_examples() {
    let ds = line(&[0.0, 10.0, 4.0]);
    let d = Discretizer::fit(&ds, BinStrategy::Uniform, 2).unwrap();
    assert_eq!(d.bin(0, 4.0), 0);
    assert_eq!(d.bin(0, 10.0), 1);
    let xs: Vec<f64> = (0..100).map(|i| i as f64 * 0.37).collect();
    let ds = line(&xs);
    let out = Discretizer::fit(&ds, BinStrategy::Quantile, 4).unwrap().apply(&ds).unwrap();
    let mut counts = [0; 4];
    for r in out.records() {
        counts[r[0] as usize] += 1;
    }
    assert_eq!(counts, [25; 4]);
    let pixels: Vec<f64> = (0..256).map(|i| i as f64 / 255.0 * 50.0).collect();
    let out = Discretizer::fit(&line(&pixels), BinStrategy::Uniform, 16).unwrap();
    assert_eq!(out.output_schema().columns()[0].cardinality(), Some(16));
    assert!(Discretizer::fit(&ds, BinStrategy::Uniform, 1).is_err());
    assert!(Discretizer::fit(&ds, BinStrategy::Uniform, 2).unwrap().apply(&gen_gauss(2, 3, 0)).is_err());
}

#[test]
fn csv_examples() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.csv");
    let c = gen_censuslite(50, 1);
    write_csv(&c, &path).unwrap();
    assert_eq!(read_csv(&path).unwrap().records(), c.records());
    let g = gen_gauss(3, 20, 1);
    write_csv(&g, &path).unwrap();
    assert_eq!(read_csv(&path).unwrap().records(), g.records());
    let ds = parse_csv("age:num,sex:cat\n31.5,F\n40,M\n").unwrap();
    assert!(!ds.schema().columns()[0].is_categorical() && ds.schema().columns()[1].is_categorical());
    match parse_csv("age:num,sex:bool\n1,2\n") {
        Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (1, 2)),
        other => panic!("{other:?}"),
    }
    let quoted = parse_csv("place:cat\n\"Paris, FR\"\n").unwrap();
    assert!(sbpm_core::tabular::render_csv(&quoted).unwrap().contains("\"Paris, FR\""));
}

#[test]
fn smaller_budget_never_improves_marginals() {
    let (train, _) = split(&gen_censuslite(2000, 11), 11).unwrap();
    let mean_diff = |eps: f64| {
        (0..20u64)
            .map(|s| {
                let m = fit(&GeneratorKind::Independent, &train, Some(DpBudget::new(eps).unwrap()), s).unwrap();
                utility(&train, &sample(&m, 1000, s)).unwrap().marginal_diff
            })
            .sum::<f64>()
            / 20.0
    };
    let diffs: Vec<f64> = [f64::INFINITY, 10.0, 1.0, 0.1, 0.01].iter().map(|&e| mean_diff(e)).collect();
    for w in diffs.windows(2) {
        assert!(w[1] >= w[0], "{diffs:?}");
    }
}

#[test]
fn oracle_ignores_train() {
    let a = fit(&GeneratorKind::Oracle { dim: 2, step: None }, &gen_gauss(2, 0, 0), None, 1).unwrap();
    let b = fit(&GeneratorKind::Oracle { dim: 2, step: None }, &gen_gauss(2, 500, 3), None, 1).unwrap();
    assert_eq!(sample(&a, 100, 4), sample(&b, 100, 4));
}
