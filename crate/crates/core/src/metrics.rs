//! Exact nearest-neighbor kernels, the three similarity-based privacy tests
//! (IMS, DCR, NNDR) and the similarity/outlier filters.
//!
//! Percentiles interpolate linearly between order statistics: for `m` sorted
//! values the `p`-th percentile sits at rank `p / 100 * (m - 1)`.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tabular::{canonical, Dataset, RecordKey};

/// Percentile used by the DCR and NNDR tests.
pub const TEST_PERCENTILE: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    Hamming,
    Euclidean,
}

impl std::str::FromStr for DistanceMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hamming" => Ok(DistanceMetric::Hamming),
            "euclidean" => Ok(DistanceMetric::Euclidean),
            other => Err(Error::InvalidArgument(format!("unknown metric `{other}`"))),
        }
    }
}

impl DistanceMetric {
    /// Distance between two canonicalized rows.
    fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            DistanceMetric::Hamming => a.iter().zip(b).filter(|(x, y)| x != y).count() as f64,
            DistanceMetric::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
        }
    }

    /// Distance between two raw rows.
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            DistanceMetric::Hamming => a
                .iter()
                .zip(b)
                .filter(|(x, y)| canonical(**x) != canonical(**y))
                .count() as f64,
            DistanceMetric::Euclidean => self.eval(a, b),
        }
    }

    fn check(self, ds: &Dataset) -> Result<()> {
        if self == DistanceMetric::Euclidean && !ds.schema().all_continuous() {
            return Err(Error::InvalidArgument(
                "euclidean distance needs all-continuous columns; discretize and use hamming".into(),
            ));
        }
        Ok(())
    }
}

fn canonical_rows(ds: &Dataset, metric: DistanceMetric) -> Vec<Vec<f64>> {
    match metric {
        DistanceMetric::Hamming => ds
            .records()
            .iter()
            .map(|r| r.iter().map(|&x| canonical(x)).collect())
            .collect(),
        DistanceMetric::Euclidean => ds.records().to_vec(),
    }
}

/// Nearest and second-nearest reference distances for one query row.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NnResult {
    pub d1: f64,
    pub d2: f64,
    /// Index of the nearest reference row, lowest index on ties.
    pub nn_index: usize,
}

impl NnResult {
    /// `d1 / d2`, defined as 1 when `d2 == 0`.
    pub fn ratio(&self) -> f64 {
        if self.d2 == 0.0 {
            1.0
        } else {
            self.d1 / self.d2
        }
    }
}

fn scan(query: &[f64], reference: &[Vec<f64>], metric: DistanceMetric) -> NnResult {
    let mut d1 = f64::INFINITY;
    let mut d2 = f64::INFINITY;
    let mut nn_index = 0;
    for (i, r) in reference.iter().enumerate() {
        let d = metric.eval(query, r);
        if d < d1 {
            d2 = d1;
            d1 = d;
            nn_index = i;
        } else if d < d2 {
            d2 = d;
        }
    }
    NnResult { d1, d2, nn_index }
}

/// Precomputed, canonicalized reference rows.
#[derive(Clone, Debug)]
pub struct Reference {
    rows: Vec<Vec<f64>>,
    keys: HashSet<RecordKey>,
    metric: DistanceMetric,
    dataset: Dataset,
}

impl Reference {
    pub fn new(ds: &Dataset, metric: DistanceMetric) -> Result<Self> {
        metric.check(ds)?;
        Ok(Reference {
            rows: canonical_rows(ds, metric),
            keys: ds.keys().collect(),
            metric,
            dataset: ds.clone(),
        })
    }

    pub fn metric(&self) -> DistanceMetric {
        self.metric
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn contains(&self, row: &[f64]) -> bool {
        self.keys.contains(&RecordKey::of(row))
    }

    /// Exact nearest neighbors of every query row. Identical query rows are
    /// resolved once.
    pub fn nn(&self, query: &Dataset) -> Result<Vec<NnResult>> {
        if self.rows.len() < 2 {
            return Err(Error::TooFewRows {
                needed: 2,
                got: self.rows.len(),
            });
        }
        self.nn_any(query)
    }

    fn nn_any(&self, query: &Dataset) -> Result<Vec<NnResult>> {
        query.ensure_same_schema(&self.dataset)?;
        if self.rows.is_empty() {
            return Err(Error::TooFewRows { needed: 1, got: 0 });
        }
        let q = canonical_rows(query, self.metric);
        let mut slot: HashMap<RecordKey, usize> = HashMap::new();
        let mut distinct: Vec<usize> = Vec::new();
        let index: Vec<usize> = query
            .records()
            .iter()
            .enumerate()
            .map(|(i, r)| {
                *slot.entry(RecordKey::of(r)).or_insert_with(|| {
                    distinct.push(i);
                    distinct.len() - 1
                })
            })
            .collect();
        let solved: Vec<NnResult> = distinct
            .par_iter()
            .map(|&i| scan(&q[i], &self.rows, self.metric))
            .collect();
        Ok(index.into_iter().map(|s| solved[s]).collect())
    }

    /// Distance from each query row to its nearest reference row.
    pub fn nearest(&self, query: &Dataset) -> Result<Vec<f64>> {
        Ok(self.nn_any(query)?.into_iter().map(|r| r.d1).collect())
    }

    /// Fraction of query rows with an exact reference match.
    pub fn match_share(&self, query: &Dataset) -> Result<f64> {
        query.ensure_same_schema(&self.dataset)?;
        if query.is_empty() {
            return Err(Error::TooFewRows { needed: 1, got: 0 });
        }
        let hits = query.records().iter().filter(|r| self.contains(r)).count();
        Ok(hits as f64 / query.len() as f64)
    }
}

pub fn nn_distances(query: &Dataset, reference: &Dataset, metric: DistanceMetric) -> Result<Vec<NnResult>> {
    metric.check(query)?;
    Reference::new(reference, metric)?.nn(query)
}

/// Share of `synth` rows that exactly match some `train` row.
pub fn ims_share(train: &Dataset, synth: &Dataset) -> Result<f64> {
    train.ensure_same_schema(synth)?;
    if synth.is_empty() {
        return Err(Error::TooFewRows { needed: 1, got: 0 });
    }
    let keys: HashSet<RecordKey> = train.keys().collect();
    let hits = synth.keys().filter(|k| keys.contains(k)).count();
    Ok(hits as f64 / synth.len() as f64)
}

/// Percentile of already sorted values, interpolating linearly between
/// neighbouring order statistics. The rank is scaled by 100 before dividing,
/// so integer data at integer `p` gets correctly rounded results.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let scaled = p * (sorted.len() - 1) as f64;
    let lo = ((scaled / 100.0).floor() as usize).min(sorted.len() - 1);
    let rest = scaled - 100.0 * lo as f64;
    let (a, b) = (sorted[lo], sorted[(lo + 1).min(sorted.len() - 1)]);
    if rest <= 0.0 || a == b {
        return a;
    }
    (a + (b - a) * rest / 100.0).clamp(a, b)
}

/// Percentile of unsorted values.
pub fn percentile_of(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    percentile(&v, p)
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImsScore {
    pub share_synth: f64,
    pub share_test: f64,
    pub pass: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceScore {
    pub pct5_synth: f64,
    pub pct5_test: f64,
    pub mean_synth: f64,
    pub mean_test: f64,
    pub pass: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivacyReport {
    pub ims: ImsScore,
    pub dcr: DistanceScore,
    pub nndr: DistanceScore,
    pub all_pass: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct SideStats {
    share: f64,
    dcr_pct5: f64,
    dcr_mean: f64,
    nndr_pct5: f64,
    nndr_mean: f64,
}

/// A train/test pair with the test-side statistics computed once, ready to
/// score any number of synthetic datasets.
#[derive(Clone, Debug)]
pub struct MetricsContext {
    train: Reference,
    test_stats: SideStats,
}

impl MetricsContext {
    pub fn new(train: &Dataset, test: &Dataset, metric: DistanceMetric) -> Result<Self> {
        train.ensure_same_schema(test)?;
        if test.len() < 2 {
            return Err(Error::TooFewRows {
                needed: 2,
                got: test.len(),
            });
        }
        let train = Reference::new(train, metric)?;
        let test_stats = side_stats(&train, test)?;
        Ok(MetricsContext { train, test_stats })
    }

    pub fn metric(&self) -> DistanceMetric {
        self.train.metric
    }

    pub fn train(&self) -> &Reference {
        &self.train
    }

    pub fn evaluate(&self, synth: &Dataset) -> Result<PrivacyReport> {
        self.train.metric.check(synth)?;
        let s = side_stats(&self.train, synth)?;
        let t = self.test_stats;
        let ims = ImsScore {
            share_synth: s.share,
            share_test: t.share,
            pass: s.share <= t.share,
        };
        let dcr = DistanceScore {
            pct5_synth: s.dcr_pct5,
            pct5_test: t.dcr_pct5,
            mean_synth: s.dcr_mean,
            mean_test: t.dcr_mean,
            pass: s.dcr_pct5 >= t.dcr_pct5,
        };
        let nndr = DistanceScore {
            pct5_synth: s.nndr_pct5,
            pct5_test: t.nndr_pct5,
            mean_synth: s.nndr_mean,
            mean_test: t.nndr_mean,
            pass: s.nndr_pct5 >= t.nndr_pct5,
        };
        Ok(PrivacyReport {
            ims,
            dcr,
            nndr,
            all_pass: ims.pass && dcr.pass && nndr.pass,
        })
    }
}

fn side_stats(train: &Reference, other: &Dataset) -> Result<SideStats> {
    let nn = train.nn(other)?;
    let share = train.match_share(other)?;
    let mut d1: Vec<f64> = nn.iter().map(|r| r.d1).collect();
    let mut ratio: Vec<f64> = nn.iter().map(NnResult::ratio).collect();
    let (dcr_mean, nndr_mean) = (mean(&d1), mean(&ratio));
    d1.sort_by(f64::total_cmp);
    ratio.sort_by(f64::total_cmp);
    Ok(SideStats {
        share,
        dcr_pct5: percentile(&d1, TEST_PERCENTILE),
        dcr_mean,
        nndr_pct5: percentile(&ratio, TEST_PERCENTILE),
        nndr_mean,
    })
}

/// Scores `synth` against the `(train, test)` pair with all three tests.
pub fn privacy_report(train: &Dataset, test: &Dataset, synth: &Dataset, metric: DistanceMetric) -> Result<PrivacyReport> {
    MetricsContext::new(train, test, metric)?.evaluate(synth)
}

/// Drops synthetic rows within `tau` of some train row.
pub fn similarity_filter(train: &Dataset, synth: &Dataset, tau: f64, metric: DistanceMetric) -> Result<Dataset> {
    if !(tau >= 0.0) {
        return Err(Error::InvalidArgument(format!("similarity threshold must be >= 0, got {tau}")));
    }
    let reference = Reference::new(train, metric)?;
    similarity_filter_with(&reference, synth, tau)
}

pub fn similarity_filter_with(train: &Reference, synth: &Dataset, tau: f64) -> Result<Dataset> {
    if synth.is_empty() {
        return Ok(synth.clone());
    }
    let d1 = train.nearest(synth)?;
    Ok(synth.filter(|i, _| d1[i] > tau))
}

/// Default percentile of the outlier filter.
pub const OUTLIER_FILTER_PERCENTILE: f64 = 95.0;

/// Threshold of the outlier filter: the `p`-th percentile of the train rows'
/// leave-self-out nearest-neighbor distances.
pub fn outlier_threshold(train: &Reference, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 100.0) {
        return Err(Error::InvalidArgument(format!("percentile must be in (0, 100), got {p}")));
    }
    let rows = &train.rows;
    if rows.len() < 2 {
        return Err(Error::TooFewRows {
            needed: 2,
            got: rows.len(),
        });
    }
    let metric = train.metric;
    let mut loo: Vec<f64> = (0..rows.len())
        .into_par_iter()
        .map(|i| {
            rows.iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, r)| metric.eval(&rows[i], r))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    loo.sort_by(f64::total_cmp);
    Ok(percentile(&loo, p))
}

/// Drops synthetic rows farther from the train data than the outlier threshold.
pub fn outlier_filter(train: &Dataset, synth: &Dataset, p: f64, metric: DistanceMetric) -> Result<Dataset> {
    let reference = Reference::new(train, metric)?;
    let threshold = outlier_threshold(&reference, p)?;
    outlier_filter_with(&reference, synth, threshold)
}

pub fn outlier_filter_with(train: &Reference, synth: &Dataset, threshold: f64) -> Result<Dataset> {
    if synth.is_empty() {
        return Ok(synth.clone());
    }
    let d1 = train.nearest(synth)?;
    Ok(synth.filter(|i, _| d1[i] <= threshold))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::{gen_gauss, split, ColumnSchema, Schema};
    use std::sync::Arc;

    fn cat3(rows: &[[usize; 3]]) -> Dataset {
        let schema = Arc::new(
            Schema::new(
                ["c0", "c1", "c2"]
                    .iter()
                    .map(|n| ColumnSchema::categorical(n, ["a", "b", "c", "d", "x", "y", "z"]))
                    .collect(),
            )
            .unwrap(),
        );
        Dataset::new(
            schema,
            rows.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect(),
            "cat3",
        )
        .unwrap()
    }

    fn line(xs: &[f64]) -> Dataset {
        let schema = Arc::new(Schema::new(vec![ColumnSchema::continuous("x", -100.0, 100.0)]).unwrap());
        Dataset::new(schema, xs.iter().map(|&x| vec![x]).collect(), "line").unwrap()
    }

    #[test]
    fn self_match_has_zero_distance() {
        let ds = gen_gauss(3, 50, 1);
        for r in nn_distances(&ds, &ds, DistanceMetric::Euclidean).unwrap() {
            assert_eq!(r.d1, 0.0);
        }
    }

    #[test]
    fn hamming_example() {
        // (a,b,c) against {(a,b,c), (a,b,d), (x,y,z)}
        let reference = cat3(&[[0, 1, 2], [0, 1, 3], [4, 5, 6]]);
        let q = cat3(&[[0, 1, 2]]);
        let r = nn_distances(&q, &reference, DistanceMetric::Hamming).unwrap()[0];
        assert_eq!((r.d1, r.d2, r.nn_index), (0.0, 1.0, 0));
    }

    #[test]
    fn euclidean_example() {
        let r = nn_distances(&line(&[0.0]), &line(&[1.0, -2.0]), DistanceMetric::Euclidean).unwrap()[0];
        assert_eq!((r.d1, r.d2, r.nn_index), (1.0, 2.0, 0));
    }

    #[test]
    fn ties_pick_lowest_index_and_duplicates_give_d2_equal_d1() {
        let r = nn_distances(&line(&[0.0]), &line(&[1.0, -1.0, 1.0]), DistanceMetric::Euclidean).unwrap()[0];
        assert_eq!((r.d1, r.d2, r.nn_index), (1.0, 1.0, 0));
    }

    #[test]
    fn reference_needs_two_rows() {
        assert!(nn_distances(&line(&[0.0]), &line(&[1.0]), DistanceMetric::Euclidean).is_err());
    }

    #[test]
    fn euclidean_rejects_categorical() {
        let c = cat3(&[[0, 0, 0], [1, 1, 1]]);
        assert!(nn_distances(&c, &c, DistanceMetric::Euclidean).is_err());
    }

    #[test]
    fn ims_counts() {
        let ds = gen_gauss(2, 101, 2);
        assert_eq!(ims_share(&ds, &ds).unwrap(), 1.0);
        assert_eq!(ims_share(&ds, &gen_gauss(2, 10, 3)).unwrap(), 0.0);
        let mixed = gen_gauss(2, 100, 4).extended([ds.records()[7].clone()]).unwrap();
        assert_eq!(ims_share(&ds, &mixed).unwrap(), 1.0 / 101.0);
        assert!(ims_share(&ds, &ds.select(&[])).is_err());
    }

    #[test]
    fn percentile_interpolates() {
        let v: Vec<f64> = (0..=10).map(f64::from).collect();
        assert_eq!(percentile(&v, 5.0), 0.5);
        assert_eq!(percentile(&v, 100.0), 10.0);
        assert_eq!(percentile(&[3.0], 5.0), 3.0);
        assert_eq!(percentile_of(&[4.0, 0.0, 2.0], 50.0), 2.0);
    }

    #[test]
    fn nndr_degenerate_ratio() {
        assert_eq!(NnResult { d1: 0.0, d2: 0.0, nn_index: 0 }.ratio(), 1.0);
        assert_eq!(NnResult { d1: 0.0, d2: 2.0, nn_index: 0 }.ratio(), 0.0);
    }

    #[test]
    fn replicating_test_passes_everything() {
        let (train, test) = split(&gen_gauss(2, 2000, 8), 8).unwrap();
        let rep = privacy_report(&train, &test, &test, DistanceMetric::Euclidean).unwrap();
        assert!(rep.all_pass);
        assert_eq!(rep.ims.share_synth, rep.ims.share_test);
    }

    #[test]
    fn copying_train_fails_ims() {
        let (train, test) = split(&gen_gauss(2, 2000, 8), 8).unwrap();
        let rep = privacy_report(&train, &test, &train, DistanceMetric::Euclidean).unwrap();
        assert_eq!(rep.ims.share_synth, 1.0);
        assert_eq!(rep.ims.share_test, 0.0);
        assert!(!rep.ims.pass);
        assert!(!rep.all_pass);
    }

    #[test]
    fn report_json_field_names() {
        let (train, test) = split(&gen_gauss(2, 200, 1), 1).unwrap();
        let rep = privacy_report(&train, &test, &test, DistanceMetric::Euclidean).unwrap();
        let v = serde_json::to_value(rep).unwrap();
        for k in ["ims", "dcr", "nndr", "all_pass"] {
            assert!(v.get(k).is_some(), "{k}");
        }
        for k in ["pct5_synth", "pct5_test", "mean_synth", "mean_test", "pass"] {
            assert!(v["dcr"].get(k).is_some(), "{k}");
        }
        assert!(v["ims"].get("share_synth").is_some());
    }

    #[test]
    fn similarity_filter_cases() {
        let train = gen_gauss(2, 100, 1);
        let m = DistanceMetric::Euclidean;
        assert!(similarity_filter(&train, &train, 0.0, m).unwrap().is_empty());
        let other = gen_gauss(2, 50, 2);
        let kept = similarity_filter(&train, &other, 0.0, m).unwrap();
        assert_eq!(kept.records(), other.records());
        let once = similarity_filter(&train, &other, 0.1, m).unwrap();
        let twice = similarity_filter(&train, &once, 0.1, m).unwrap();
        assert_eq!(once, twice);
        assert!(similarity_filter(&train, &other, -1.0, m).is_err());
    }

    #[test]
    fn outlier_filter_cases() {
        let train = gen_gauss(2, 200, 1);
        let m = DistanceMetric::Euclidean;
        let subset = train.select(&[0, 5, 9]);
        assert_eq!(outlier_filter(&train, &subset, 95.0, m).unwrap(), subset);
        let far = train.extended([vec![9.0, 9.0]]).unwrap().select(&[200]);
        assert!(outlier_filter(&train, &far, 95.0, m).unwrap().is_empty());
        let once = outlier_filter(&train, &gen_gauss(2, 300, 7), 95.0, m).unwrap();
        assert_eq!(outlier_filter(&train, &once, 95.0, m).unwrap(), once);
        assert!(outlier_filter(&train.select(&[0]), &subset, 95.0, m).is_err());
        assert!(outlier_filter(&train, &subset, 100.0, m).is_err());
    }
}
