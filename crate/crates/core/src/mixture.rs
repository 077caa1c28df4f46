//! Diagonal-covariance Gaussian mixtures fitted by expectation-maximization.
//!
//! Categorical columns are one-hot encoded; continuous columns are used as is.
//! Variances are floored at [`VARIANCE_FLOOR`], which keeps the model usable in
//! one-hot spaces where many coordinates are constant within a cluster.

use std::collections::BTreeSet;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::tabular::{ColumnKind, Dataset, Schema};

pub const VARIANCE_FLOOR: f64 = 1e-6;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Maps rows of a fixed schema to feature vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    schema: Schema,
    width: usize,
}

impl Encoder {
    pub fn new(schema: &Schema) -> Self {
        let width = schema
            .columns()
            .iter()
            .map(|c| c.cardinality().unwrap_or(1))
            .sum();
        Encoder {
            schema: schema.clone(),
            width,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn encode(&self, row: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.width];
        let mut off = 0;
        for (col, &v) in self.schema.columns().iter().zip(row) {
            match &col.kind {
                ColumnKind::Categorical { support } => {
                    out[off + v as usize] = 1.0;
                    off += support.len();
                }
                ColumnKind::Continuous { .. } => {
                    out[off] = v;
                    off += 1;
                }
            }
        }
        out
    }

    fn encode_all(&self, ds: &Dataset) -> Result<Vec<Vec<f64>>> {
        if *ds.schema() != self.schema {
            return Err(Error::SchemaMismatch("points do not match the mixture's schema".into()));
        }
        Ok(ds.records().iter().map(|r| self.encode(r)).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub k: usize,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    pub encoder: Encoder,
    /// Log-likelihood of the fitting data, one entry per E-step.
    pub log_likelihood_trace: Vec<f64>,
    /// Labels of the fitting data under the final parameters.
    pub fit_labels: Vec<usize>,
}

fn log_component(x: &[f64], mean: &[f64], var: &[f64]) -> f64 {
    let mut s = 0.0;
    for ((&xi, &mi), &vi) in x.iter().zip(mean).zip(var) {
        let d = xi - mi;
        s += LN_2PI + vi.ln() + d * d / vi;
    }
    -0.5 * s
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

impl GmmModel {
    fn joint_log(&self, x: &[f64]) -> Vec<f64> {
        (0..self.k)
            .map(|c| self.weights[c].ln() + log_component(x, &self.means[c], &self.variances[c]))
            .collect()
    }

    /// Posterior cluster probabilities for each row.
    pub fn responsibilities(&self, points: &Dataset) -> Result<Vec<Vec<f64>>> {
        let xs = self.encoder.encode_all(points)?;
        Ok(xs.par_iter().map(|x| self.posterior(x).0).collect())
    }

    fn posterior(&self, x: &[f64]) -> (Vec<f64>, f64) {
        let lj = self.joint_log(x);
        let lse = log_sum_exp(&lj);
        (lj.iter().map(|&l| (l - lse).exp()).collect(), lse)
    }

    fn label(&self, x: &[f64]) -> usize {
        let lj = self.joint_log(x);
        let mut best = 0;
        for c in 1..self.k {
            if lj[c] > lj[best] {
                best = c;
            }
        }
        best
    }

    /// Most responsible component per row; ties go to the lowest index.
    pub fn predict(&self, points: &Dataset) -> Result<Vec<usize>> {
        let xs = self.encoder.encode_all(points)?;
        Ok(xs.par_iter().map(|x| self.label(x)).collect())
    }

    pub fn predict_row(&self, row: &[f64]) -> usize {
        self.label(&self.encoder.encode(row))
    }

    /// Log of the mixture density at `row`.
    pub fn log_density(&self, row: &[f64]) -> f64 {
        log_sum_exp(&self.joint_log(&self.encoder.encode(row)))
    }

    pub fn schema(&self) -> &Schema {
        &self.encoder.schema
    }
}

fn kmeans_pp(xs: &[Vec<f64>], k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut centers = vec![xs[rng.random_range(0..xs.len())].clone()];
    let mut d2: Vec<f64> = xs.iter().map(|x| sq_dist(x, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = xs.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                u -= d;
                if u < 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..xs.len())
        };
        let c = xs[pick].clone();
        for (d, x) in d2.iter_mut().zip(xs) {
            *d = d.min(sq_dist(x, &c));
        }
        centers.push(c);
    }
    centers
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Fits a `k`-component mixture. Stops once the log-likelihood improves by
/// less than `tol` or after `max_iters` EM iterations.
pub fn fit_gmm(points: &Dataset, k: usize, max_iters: usize, tol: f64, seed: u64) -> Result<GmmModel> {
    if k == 0 {
        return Err(Error::InvalidArgument("a mixture needs at least one component".into()));
    }
    if points.len() < k {
        return Err(Error::TooFewRows {
            needed: k,
            got: points.len(),
        });
    }
    let encoder = Encoder::new(points.schema());
    let xs = encoder.encode_all(points)?;
    let n = xs.len();
    let dim = encoder.width();
    let mut rng = seed::rng(seed);

    let mut global_var = vec![0.0; dim];
    let global_mean: Vec<f64> = (0..dim).map(|d| xs.iter().map(|x| x[d]).sum::<f64>() / n as f64).collect();
    for x in &xs {
        for d in 0..dim {
            global_var[d] += (x[d] - global_mean[d]).powi(2) / n as f64;
        }
    }
    for v in &mut global_var {
        *v = v.max(VARIANCE_FLOOR);
    }

    let mut model = GmmModel {
        k,
        weights: vec![1.0 / k as f64; k],
        means: kmeans_pp(&xs, k, &mut rng),
        variances: vec![global_var; k],
        encoder,
        log_likelihood_trace: Vec::new(),
        fit_labels: Vec::new(),
    };

    for iter in 0..=max_iters {
        // E-step
        let post: Vec<(Vec<f64>, f64)> = xs.par_iter().map(|x| model.posterior(x)).collect();
        let ll: f64 = post.iter().map(|(_, l)| l).sum();
        if let Some(&prev) = model.log_likelihood_trace.last() {
            debug_assert!(
                ll >= prev - 1e-8 * prev.abs().max(1.0),
                "EM log-likelihood decreased: {prev} -> {ll}"
            );
            model.log_likelihood_trace.push(ll);
            if ll - prev < tol {
                break;
            }
        } else {
            model.log_likelihood_trace.push(ll);
        }
        if iter == max_iters {
            break;
        }
        // M-step
        for c in 0..k {
            let nk: f64 = post.iter().map(|(r, _)| r[c]).sum();
            if nk <= 0.0 {
                model.weights[c] = 0.0;
                continue;
            }
            let mut mean = vec![0.0; dim];
            for ((r, _), x) in post.iter().zip(&xs) {
                let w = r[c];
                if w == 0.0 {
                    continue;
                }
                for d in 0..dim {
                    mean[d] += w * x[d];
                }
            }
            for m in &mut mean {
                *m /= nk;
            }
            let mut var = vec![0.0; dim];
            for ((r, _), x) in post.iter().zip(&xs) {
                let w = r[c];
                if w == 0.0 {
                    continue;
                }
                for d in 0..dim {
                    var[d] += w * (x[d] - mean[d]).powi(2);
                }
            }
            for v in &mut var {
                *v = (*v / nk).max(VARIANCE_FLOOR);
            }
            model.weights[c] = nk / n as f64;
            model.means[c] = mean;
            model.variances[c] = var;
        }
        let total: f64 = model.weights.iter().sum();
        for w in &mut model.weights {
            *w /= total;
        }
    }
    model.fit_labels = xs.par_iter().map(|x| model.label(x)).collect();
    Ok(model)
}

/// Number of rows assigned to each of `k` clusters.
pub fn cluster_sizes(labels: &[usize], k: usize) -> Vec<usize> {
    let mut sizes = vec![0; k];
    for &l in labels {
        sizes[l] += 1;
    }
    sizes
}

/// Adds clusters smallest-first (ties by lower id) while the running total
/// stays within `budget`.
pub fn smallest_clusters(sizes: &[usize], budget: usize) -> BTreeSet<usize> {
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by_key(|&c| (sizes[c], c));
    let mut total = 0;
    let mut chosen = BTreeSet::new();
    for c in order {
        if total + sizes[c] > budget {
            break;
        }
        total += sizes[c];
        chosen.insert(c);
    }
    chosen
}
