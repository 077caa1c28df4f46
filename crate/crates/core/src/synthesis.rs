//! Generative models behind a common fit/sample interface, plus the utility
//! score comparing a synthetic dataset with its train data.
//!
//! Implemented models:
//! - `oracle`: samples the true standard-normal generative process and never
//!   looks at train data;
//! - `random`: each column uniform over the distinct values seen in train;
//! - `independent`: each column from its (optionally Laplace-noised) marginal;
//! - `privbayes_lite`: a greedy Bayesian network over categorical columns with
//!   noisy structure selection and noisy conditional tables;
//! - `replay`: resamples train rows verbatim (a memorizing baseline);
//! - `external`: replays pre-sampled CSV files from a directory, round-robin.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::seed;
use crate::tabular::{self, canonical, ColumnKind, Dataset, Record, RecordKey, Schema};

/// An `(epsilon, delta)` privacy budget. `epsilon` may be infinite.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpBudget {
    #[serde(serialize_with = "ser_eps", deserialize_with = "de_eps")]
    pub epsilon: f64,
    /// Defaults to `1 / n` at fit time when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

fn ser_eps<S: Serializer>(eps: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if eps.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*eps)
    }
}

fn de_eps<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Eps {
        Num(f64),
        Text(String),
    }
    match Eps::deserialize(d)? {
        Eps::Num(x) => Ok(x),
        Eps::Text(t) => t.parse::<f64>().map_err(serde::de::Error::custom),
    }
}

impl DpBudget {
    pub fn new(epsilon: f64) -> Result<Self> {
        let b = DpBudget { epsilon, delta: None };
        b.validate()?;
        Ok(b)
    }

    pub fn infinite() -> Self {
        DpBudget {
            epsilon: f64::INFINITY,
            delta: None,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.epsilon.is_finite()
    }

    pub fn delta_for(&self, n: usize) -> f64 {
        self.delta.unwrap_or(1.0 / n.max(1) as f64)
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if let Some(d) = self.delta {
            if !(0.0..1.0).contains(&d) {
                return Err(Error::InvalidArgument(format!("delta must be in [0, 1), got {d}")));
            }
        }
        Ok(())
    }
}

fn laplace(rng: &mut impl Rng, scale: f64) -> f64 {
    let u: f64 = rng.random::<f64>() - 0.5;
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorKind {
    Oracle {
        dim: usize,
        /// Grid the samples are rounded to, if any.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        step: Option<f64>,
    },
    Random,
    Independent,
    PrivbayesLite {
        #[serde(default = "default_parents")]
        max_parents: usize,
    },
    Replay,
    External {
        dir: PathBuf,
    },
}

fn default_parents() -> usize {
    2
}

impl GeneratorKind {
    pub fn name(&self) -> &'static str {
        match self {
            GeneratorKind::Oracle { .. } => "oracle",
            GeneratorKind::Random => "random",
            GeneratorKind::Independent => "independent",
            GeneratorKind::PrivbayesLite { .. } => "privbayes_lite",
            GeneratorKind::Replay => "replay",
            GeneratorKind::External { .. } => "external",
        }
    }

    pub fn supports_dp(&self) -> bool {
        matches!(self, GeneratorKind::Independent | GeneratorKind::PrivbayesLite { .. })
    }
}

/// A discrete distribution over stored values.
#[derive(Clone, Debug)]
pub struct ValueDist {
    pub values: Vec<f64>,
    pub probs: Vec<f64>,
    index: WeightedIndex<f64>,
}

impl ValueDist {
    fn new(values: Vec<f64>, weights: Vec<f64>) -> Self {
        let total: f64 = weights.iter().sum();
        let probs: Vec<f64> = if total > 0.0 {
            weights.iter().map(|w| w / total).collect()
        } else {
            vec![1.0 / values.len() as f64; values.len()]
        };
        let index = WeightedIndex::new(&probs).expect("probabilities are finite, nonnegative and sum to 1");
        ValueDist { values, probs, index }
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        self.values[self.index.sample(rng)]
    }
}

impl PartialEq for ValueDist {
    fn eq(&self, other: &Self) -> bool {
        self.values == other.values && self.probs == other.probs
    }
}

/// One node of the PrivBayes-lite network.
#[derive(Clone, Debug, PartialEq)]
pub struct BayesNode {
    pub column: usize,
    pub parents: Vec<usize>,
    /// Conditional distribution per parent configuration (mixed radix over
    /// the parents' cardinalities, first parent most significant).
    pub tables: Vec<ValueDist>,
}

#[derive(Debug)]
pub enum Params {
    Oracle { dim: usize, step: Option<f64> },
    Random { values: Vec<Vec<f64>> },
    Independent { columns: Vec<ValueDist> },
    PrivBayes { nodes: Vec<BayesNode> },
    Replay { rows: Vec<Record> },
    External { files: Vec<Dataset>, cursor: AtomicUsize },
}

/// A fitted generator.
#[derive(Debug)]
pub struct GeneratorModel {
    pub kind: GeneratorKind,
    pub params: Params,
    pub dp: Option<DpBudget>,
    schema: Arc<Schema>,
}

impl GeneratorModel {
    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }
}

fn require_categorical(train: &Dataset, what: &str) -> Result<()> {
    if !train.schema().all_categorical() {
        return Err(Error::InvalidArgument(format!(
            "{what} needs categorical columns; discretize continuous columns first"
        )));
    }
    Ok(())
}

fn distinct_values(train: &Dataset, j: usize) -> Vec<f64> {
    let mut seen = HashMap::new();
    let mut out = Vec::new();
    for r in train.records() {
        if seen.insert(canonical(r[j]).to_bits(), ()).is_none() {
            out.push(r[j]);
        }
    }
    out
}

/// Fits a generator of the given kind on `train`.
pub fn fit(kind: &GeneratorKind, train: &Dataset, dp: Option<DpBudget>, seed: u64) -> Result<GeneratorModel> {
    if let Some(b) = dp {
        b.validate()?;
        if b.is_finite() && !kind.supports_dp() {
            return Err(Error::InvalidArgument(format!(
                "{} cannot be trained with a finite privacy budget",
                kind.name()
            )));
        }
    }
    let eps = dp.map_or(f64::INFINITY, |b| b.epsilon);
    let mut rng = seed::rng(seed);
    let needs_data = !matches!(kind, GeneratorKind::Oracle { .. } | GeneratorKind::External { .. });
    if needs_data && train.is_empty() {
        return Err(Error::TooFewRows { needed: 1, got: 0 });
    }
    let (params, schema) = match kind {
        GeneratorKind::Oracle { dim, step } => {
            if *dim == 0 {
                return Err(Error::InvalidArgument("oracle dimension must be >= 1".into()));
            }
            if step.is_some_and(|h| !(h > 0.0)) {
                return Err(Error::InvalidArgument("oracle grid step must be > 0".into()));
            }
            (
                Params::Oracle { dim: *dim, step: *step },
                tabular::generate_schema_gauss(*dim),
            )
        }
        GeneratorKind::Random => {
            let values = (0..train.n_cols()).map(|j| distinct_values(train, j)).collect();
            (Params::Random { values }, train.schema_arc().clone())
        }
        GeneratorKind::Independent => {
            if eps.is_finite() {
                require_categorical(train, "a differentially private independent model")?;
            }
            let ncols = train.n_cols();
            let columns = train
                .schema()
                .columns()
                .iter()
                .enumerate()
                .map(|(j, col)| match &col.kind {
                    ColumnKind::Categorical { support } => {
                        let mut counts = vec![0.0; support.len()];
                        for r in train.records() {
                            counts[r[j] as usize] += 1.0;
                        }
                        if eps.is_finite() {
                            // unit sensitivity per column, budget split evenly
                            let scale = ncols as f64 / eps;
                            for c in &mut counts {
                                *c = (*c + laplace(&mut rng, scale)).max(0.0);
                            }
                        }
                        ValueDist::new((0..support.len()).map(|v| v as f64).collect(), counts)
                    }
                    ColumnKind::Continuous { .. } => {
                        let values = distinct_values(train, j);
                        let mut idx = HashMap::new();
                        for (i, v) in values.iter().enumerate() {
                            idx.insert(canonical(*v).to_bits(), i);
                        }
                        let mut counts = vec![0.0; values.len()];
                        for r in train.records() {
                            counts[idx[&canonical(r[j]).to_bits()]] += 1.0;
                        }
                        ValueDist::new(values, counts)
                    }
                })
                .collect();
            (Params::Independent { columns }, train.schema_arc().clone())
        }
        GeneratorKind::PrivbayesLite { max_parents } => {
            require_categorical(train, "privbayes_lite")?;
            let nodes = fit_privbayes(train, *max_parents, eps, &mut rng);
            (Params::PrivBayes { nodes }, train.schema_arc().clone())
        }
        GeneratorKind::Replay => (
            Params::Replay {
                rows: train.records().to_vec(),
            },
            train.schema_arc().clone(),
        ),
        GeneratorKind::External { dir } => {
            let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "csv"))
                .collect();
            paths.sort();
            if paths.is_empty() {
                return Err(Error::InvalidArgument(format!("no csv files in {}", dir.display())));
            }
            let files = paths.iter().map(tabular::read_csv).collect::<Result<Vec<_>>>()?;
            let schema = Arc::new(files[0].schema().clone());
            for f in &files[1..] {
                if f.schema() != schema.as_ref() {
                    return Err(Error::SchemaMismatch(format!("{} differs from the first file", f.provenance())));
                }
            }
            if !train.is_empty() && train.schema() != schema.as_ref() {
                return Err(Error::SchemaMismatch("external samples do not match the train schema".into()));
            }
            let files = files
                .into_iter()
                .map(|f| Dataset::from_checked(schema.clone(), f.into_records(), "external"))
                .collect();
            (
                Params::External {
                    files,
                    cursor: AtomicUsize::new(0),
                },
                schema,
            )
        }
    };
    Ok(GeneratorModel {
        kind: kind.clone(),
        params,
        dp,
        schema,
    })
}

/// Draws `n` rows. Deterministic in `(model, n, seed)` for every kind but
/// `external`, which hands out its files in turn.
pub fn sample(model: &GeneratorModel, n: usize, seed: u64) -> Dataset {
    let mut rng = seed::rng(seed);
    let rows: Vec<Record> = match &model.params {
        Params::Oracle { dim, step } => (0..n).map(|_| tabular::gauss_row(&mut rng, *dim, *step)).collect(),
        Params::Random { values } => (0..n)
            .map(|_| values.iter().map(|vs| vs[rng.random_range(0..vs.len())]).collect())
            .collect(),
        Params::Independent { columns } => (0..n)
            .map(|_| columns.iter().map(|c| c.sample(&mut rng)).collect())
            .collect(),
        Params::PrivBayes { nodes } => {
            let ncols = model.schema.len();
            (0..n)
                .map(|_| {
                    let mut row = vec![0.0; ncols];
                    for node in nodes {
                        let cfg = parent_config(&model.schema, &node.parents, &row);
                        row[node.column] = node.tables[cfg].sample(&mut rng);
                    }
                    row
                })
                .collect()
        }
        Params::Replay { rows } => (0..n).map(|_| rows[rng.random_range(0..rows.len())].clone()).collect(),
        Params::External { files, cursor } => {
            let f = &files[cursor.fetch_add(1, Ordering::SeqCst) % files.len()];
            if f.is_empty() {
                Vec::new()
            } else {
                (0..n).map(|i| f.records()[i % f.len()].clone()).collect()
            }
        }
    };
    Dataset::from_checked(model.schema.clone(), rows, format!("synth/{}", model.kind.name()))
}

fn cardinalities(schema: &Schema) -> Vec<usize> {
    schema.columns().iter().map(|c| c.cardinality().unwrap_or(1)).collect()
}

fn parent_config(schema: &Schema, parents: &[usize], row: &[f64]) -> usize {
    let card = schema.columns();
    parents.iter().fold(0, |acc, &p| {
        acc * card[p].cardinality().expect("categorical parent") + row[p] as usize
    })
}

fn entropy(counts: impl Iterator<Item = f64>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0.0)
        .map(|c| {
            let p = c / n;
            -p * p.ln()
        })
        .sum()
}

/// Empirical mutual information (nats) between column `x` and the joint
/// configuration of `parents`.
fn mutual_information(train: &Dataset, card: &[usize], x: usize, parents: &[usize]) -> f64 {
    let n = train.len() as f64;
    let pcard: usize = parents.iter().map(|&p| card[p]).product();
    let mut joint = vec![0.0; pcard * card[x]];
    let mut px = vec![0.0; card[x]];
    let mut pp = vec![0.0; pcard];
    for r in train.records() {
        let c = parents.iter().fold(0, |acc, &p| acc * card[p] + r[p] as usize);
        let v = r[x] as usize;
        joint[c * card[x] + v] += 1.0;
        px[v] += 1.0;
        pp[c] += 1.0;
    }
    entropy(px.into_iter(), n) + entropy(pp.into_iter(), n) - entropy(joint.into_iter(), n)
}

fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    if items.len() < k {
        return Vec::new();
    }
    let mut out = Vec::new();
    for (i, &first) in items.iter().enumerate() {
        for mut rest in combinations(&items[i + 1..], k - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Bound on how much one record can move the empirical mutual information.
fn mi_sensitivity(n: f64) -> f64 {
    if n <= 1.0 {
        return 1.0;
    }
    (2.0 / n) * ((n + 1.0) / 2.0).ln() + ((n - 1.0) / n) * ((n + 1.0) / (n - 1.0)).ln()
}

fn fit_privbayes(train: &Dataset, max_parents: usize, eps: f64, rng: &mut seed::Rng) -> Vec<BayesNode> {
    let schema = train.schema();
    let card = cardinalities(schema);
    let d = card.len();
    let n = train.len() as f64;
    let eps_structure = if d > 1 { eps / 2.0 / (d - 1) as f64 } else { f64::INFINITY };
    let eps_tables = eps / 2.0 / d as f64;
    let sens = mi_sensitivity(n);

    let mut selected = vec![0usize];
    let mut structure: Vec<(usize, Vec<usize>)> = vec![(0, Vec::new())];
    while selected.len() < d {
        let k = max_parents.min(selected.len());
        let mut sorted_sel = selected.clone();
        sorted_sel.sort_unstable();
        let mut candidates: Vec<(usize, Vec<usize>, f64)> = Vec::new();
        for x in (0..d).filter(|c| !selected.contains(c)) {
            for parents in combinations(&sorted_sel, k) {
                let mi = mutual_information(train, &card, x, &parents);
                candidates.push((x, parents, mi));
            }
        }
        let pick = if eps_structure.is_finite() {
            let best = candidates.iter().map(|c| c.2).fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = candidates
                .iter()
                .map(|c| (eps_structure * (c.2 - best) / (2.0 * sens)).exp())
                .collect();
            WeightedIndex::new(&weights).expect("weights are positive").sample(rng)
        } else {
            let mut best = 0;
            for (i, c) in candidates.iter().enumerate() {
                if c.2 > candidates[best].2 + 1e-12 {
                    best = i;
                }
            }
            best
        };
        let (x, parents, _) = candidates.swap_remove(pick);
        selected.push(x);
        structure.push((x, parents));
    }

    structure
        .into_iter()
        .map(|(x, parents)| {
            let pcard: usize = parents.iter().map(|&p| card[p]).product();
            let mut counts = vec![vec![0.0; card[x]]; pcard];
            for r in train.records() {
                let c = parents.iter().fold(0, |acc, &p| acc * card[p] + r[p] as usize);
                counts[c][r[x] as usize] += 1.0;
            }
            if eps_tables.is_finite() {
                let scale = 1.0 / eps_tables;
                for row in &mut counts {
                    for c in row.iter_mut() {
                        *c = (*c + laplace(rng, scale)).max(0.0);
                    }
                }
            }
            let values: Vec<f64> = (0..card[x]).map(|v| v as f64).collect();
            BayesNode {
                column: x,
                parents,
                tables: counts.into_iter().map(|c| ValueDist::new(values.clone(), c)).collect(),
            }
        })
        .collect()
}

/// Similarity of a synthetic dataset to its train data; 0 is identical.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilityScore {
    /// Mean total-variation distance between per-column marginals.
    pub marginal_diff: f64,
    /// Mean absolute difference of pairwise normalized mutual information.
    pub mi_diff: f64,
}

impl UtilityScore {
    /// Both components averaged; lower is better.
    pub fn combined(&self) -> f64 {
        0.5 * (self.marginal_diff + self.mi_diff)
    }
}

fn value_index(ds: &Dataset, j: usize) -> (Vec<usize>, usize) {
    match &ds.schema().columns()[j].kind {
        ColumnKind::Categorical { support } => (ds.records().iter().map(|r| r[j] as usize).collect(), support.len()),
        ColumnKind::Continuous { .. } => {
            let mut ids: HashMap<u64, usize> = HashMap::new();
            let codes = ds
                .records()
                .iter()
                .map(|r| {
                    let next = ids.len();
                    *ids.entry(canonical(r[j]).to_bits()).or_insert(next)
                })
                .collect();
            (codes, ids.len())
        }
    }
}

fn normalized_mi(ds: &Dataset, a: usize, b: usize) -> f64 {
    let n = ds.len() as f64;
    let (xa, ka) = value_index(ds, a);
    let (xb, kb) = value_index(ds, b);
    let mut joint = vec![0.0; ka * kb];
    let mut pa = vec![0.0; ka];
    let mut pb = vec![0.0; kb];
    for (&u, &v) in xa.iter().zip(&xb) {
        joint[u * kb + v] += 1.0;
        pa[u] += 1.0;
        pb[v] += 1.0;
    }
    let ha = entropy(pa.into_iter(), n);
    let hb = entropy(pb.into_iter(), n);
    let hmin = ha.min(hb);
    if hmin <= 1e-12 {
        return 0.0;
    }
    let mi = ha + hb - entropy(joint.into_iter(), n);
    (mi / hmin).clamp(0.0, 1.0)
}

/// Marginal and pairwise-dependence differences between `train` and `synth`.
pub fn utility(train: &Dataset, synth: &Dataset) -> Result<UtilityScore> {
    train.ensure_same_schema(synth)?;
    require_categorical(train, "the utility score")?;
    if train.is_empty() || synth.is_empty() {
        return Err(Error::TooFewRows { needed: 1, got: 0 });
    }
    let d = train.n_cols();
    let marginal = |ds: &Dataset, j: usize, k: usize| {
        let mut p = vec![0.0; k];
        for r in ds.records() {
            p[r[j] as usize] += 1.0 / ds.len() as f64;
        }
        p
    };
    let mut tv_sum = 0.0;
    for (j, col) in train.schema().columns().iter().enumerate() {
        let k = col.cardinality().expect("categorical");
        let (p, q) = (marginal(train, j, k), marginal(synth, j, k));
        tv_sum += 0.5 * p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum::<f64>();
    }
    let mut mi_sum = 0.0;
    let mut pairs = 0;
    for a in 0..d {
        for b in a + 1..d {
            mi_sum += (normalized_mi(train, a, b) - normalized_mi(synth, a, b)).abs();
            pairs += 1;
        }
    }
    Ok(UtilityScore {
        marginal_diff: (tv_sum / d as f64).clamp(0.0, 1.0),
        mi_diff: if pairs == 0 { 0.0 } else { mi_sum / pairs as f64 },
    })
}

/// Count of distinct rows, used by tests and reports.
pub fn distinct_rows(ds: &Dataset) -> usize {
    ds.keys().collect::<std::collections::HashSet<RecordKey>>().len()
}
