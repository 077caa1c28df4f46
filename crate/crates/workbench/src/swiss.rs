//! "Swiss cheese": after the similarity filter, every train record leaves an
//! empty ball of radius `tau` in the synthetic data. With enough samples the
//! balls around isolated records stand out as holes in otherwise populated
//! space, and their centres give the records away.

use std::time::{Duration, Instant};

use serde::Serialize;

use sbpm_core::metrics::{similarity_filter, DistanceMetric};
use sbpm_core::seed;
use sbpm_core::synthesis::sample;
use sbpm_core::tabular::{label_outliers, Dataset, OutlierRule, Record};

use crate::ce::{gauss_split, oracle};
use crate::error::{config_err, Result};
use crate::report::RunReport;
use crate::spec::hash_of;

/// Exact similarity-filter decisions over a uniform cell grid of width `tau`.
/// Agrees with [`sbpm_core::metrics::similarity_filter`] row for row.
pub struct SimilarityGrid {
    tau: f64,
    dim: usize,
    lo: Vec<f64>,
    cells: Vec<usize>,
    strides: Vec<usize>,
    start: Vec<u32>,
    members: Vec<u32>,
    rows: Vec<Record>,
}

impl SimilarityGrid {
    pub fn new(train: &Dataset, tau: f64) -> Result<Self> {
        if !(tau > 0.0) {
            return config_err("the similarity grid needs a positive threshold");
        }
        if train.is_empty() || !train.schema().all_continuous() {
            return config_err("the similarity grid needs non-empty continuous data");
        }
        let dim = train.n_cols();
        let rows = train.records().to_vec();
        let lo: Vec<f64> = (0..dim)
            .map(|j| rows.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min))
            .collect();
        let cells: Vec<usize> = (0..dim)
            .map(|j| {
                let hi = rows.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
                ((hi - lo[j]) / tau).floor() as usize + 1
            })
            .collect();
        let total: usize = cells.iter().product();
        if total > 1 << 26 {
            return config_err("threshold too small for the data's extent");
        }
        let mut strides = vec![1; dim];
        for j in (0..dim.saturating_sub(1)).rev() {
            strides[j] = strides[j + 1] * cells[j + 1];
        }
        let cell_of = |r: &[f64]| -> usize {
            (0..dim)
                .map(|j| (((r[j] - lo[j]) / tau).floor() as usize).min(cells[j] - 1) * strides[j])
                .sum()
        };
        let mut counts = vec![0u32; total + 1];
        let ids: Vec<usize> = rows.iter().map(|r| cell_of(r)).collect();
        for &c in &ids {
            counts[c + 1] += 1;
        }
        for i in 0..total {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut members = vec![0u32; rows.len()];
        for (i, &c) in ids.iter().enumerate() {
            members[fill[c] as usize] = i as u32;
            fill[c] += 1;
        }
        Ok(SimilarityGrid {
            tau,
            dim,
            lo,
            cells,
            strides,
            start: counts,
            members,
            rows,
        })
    }

    /// Whether the filter drops `q`: some train row lies within `tau`.
    pub fn removes(&self, q: &[f64]) -> bool {
        let mut lo = [0usize; 8];
        let mut hi = [0usize; 8];
        let mut cur = [0usize; 8];
        if self.dim > 8 {
            return self.rows.iter().any(|r| DistanceMetric::Euclidean.distance(q, r) <= self.tau);
        }
        for j in 0..self.dim {
            let a = ((q[j] - self.tau - self.lo[j]) / self.tau - 1e-9).floor();
            let b = ((q[j] + self.tau - self.lo[j]) / self.tau + 1e-9).floor();
            if b < 0.0 || a > (self.cells[j] - 1) as f64 || a.is_nan() {
                return false;
            }
            lo[j] = a.max(0.0) as usize;
            hi[j] = (b as usize).min(self.cells[j] - 1);
            cur[j] = lo[j];
        }
        loop {
            let cell: usize = (0..self.dim).map(|j| cur[j] * self.strides[j]).sum();
            for &i in &self.members[self.start[cell] as usize..self.start[cell + 1] as usize] {
                if DistanceMetric::Euclidean.distance(q, &self.rows[i as usize]) <= self.tau {
                    return true;
                }
            }
            let mut j = self.dim;
            loop {
                if j == 0 {
                    return false;
                }
                j -= 1;
                if cur[j] < hi[j] {
                    cur[j] += 1;
                    break;
                }
                cur[j] = lo[j];
            }
        }
    }
}

/// Parameters of the untargeted hole search.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Ce3Config {
    pub dim: usize,
    /// Oracle datasets drawn, each of `rows` rows.
    pub datasets: usize,
    pub rows: usize,
    /// Similarity-filter threshold.
    pub tau: f64,
    /// Histogram bins per `tau` along each axis.
    pub bins_per_tau: f64,
    /// Smallest expected number of samples inside a ball before its emptiness
    /// counts as a hole.
    pub min_expected: f64,
    /// Hole centres closer than this many `tau` to a better one are merged.
    pub suppression: f64,
    /// The histogram covers `[-bound, bound]` on every axis.
    pub bound: f64,
    pub outlier_radius: f64,
    /// Cap on histogram bins; the bin width grows to respect it.
    pub max_bins: u64,
    /// Stop sampling early once this much time has passed.
    pub time_limit_secs: Option<f64>,
}

/// Radius beyond which a standard normal in `dim` dimensions falls with
/// probability 0.1 (square root of the chi-square 0.9 quantile).
pub fn tail_radius(dim: usize) -> Option<f64> {
    match dim {
        2 => Some(2.15),
        3 => Some(2.50),
        4 => Some(2.79),
        5 => Some(3.04),
        _ => None,
    }
}

impl Ce3Config {
    pub fn for_dim(dim: usize) -> Result<Self> {
        let Some(outlier_radius) = tail_radius(dim) else {
            return config_err(format!("hole search runs on 2 to 5 dimensions, got {dim}"));
        };
        let tau = [0.05, 0.2, 0.35, 0.5][dim - 2];
        Ok(Ce3Config {
            dim,
            datasets: 100_000,
            rows: 1000,
            tau,
            bins_per_tau: if dim == 2 { 10.0 } else { 6.0 },
            min_expected: 16.0,
            suppression: 0.5,
            bound: 5.0,
            outlier_radius,
            max_bins: 1 << 31,
            time_limit_secs: None,
        })
    }
}

/// Occupancy histogram over `[-bound, bound]^dim`.
struct Histogram {
    dim: usize,
    nb: usize,
    width: f64,
    bound: f64,
    bits: Vec<u64>,
}

impl Histogram {
    fn new(dim: usize, bound: f64, width: f64, max_bins: u64) -> Self {
        let mut nb = (2.0 * bound / width).ceil() as usize;
        if (nb as f64).powi(dim as i32) > max_bins as f64 {
            nb = (max_bins as f64).powf(1.0 / dim as f64).floor() as usize;
        }
        let width = 2.0 * bound / nb as f64;
        let total = nb.pow(dim as u32);
        Histogram {
            dim,
            nb,
            width,
            bound,
            bits: vec![0; total.div_ceil(64)],
        }
    }

    fn total(&self) -> usize {
        self.nb.pow(self.dim as u32)
    }

    fn index(&self, x: &[f64]) -> Option<usize> {
        let mut idx = 0;
        for &v in x {
            let b = ((v + self.bound) / self.width).floor();
            if !(b >= 0.0 && b < self.nb as f64) {
                return None;
            }
            idx = idx * self.nb + b as usize;
        }
        Some(idx)
    }

    fn get(&self, i: usize) -> bool {
        self.bits[i / 64] >> (i % 64) & 1 == 1
    }

    fn set(&mut self, i: usize) {
        self.bits[i / 64] |= 1 << (i % 64);
    }

    fn coords(&self, mut i: usize, out: &mut [i64]) {
        for j in (0..self.dim).rev() {
            out[j] = (i % self.nb) as i64;
            i /= self.nb;
        }
    }

    fn linear(&self, c: &[i64]) -> Option<usize> {
        let mut i = 0;
        for &v in c {
            if v < 0 || v >= self.nb as i64 {
                return None;
            }
            i = i * self.nb + v as usize;
        }
        Some(i)
    }

    fn centre(&self, b: i64) -> f64 {
        -self.bound + (b as f64 + 0.5) * self.width
    }
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// Integer offsets within `radius` bins of the origin, with their lengths,
/// sorted by length.
fn offsets(dim: usize, radius: f64) -> Vec<(f64, Vec<i64>)> {
    let r = radius.floor() as i64;
    let span = (2 * r + 1) as usize;
    let mut out = Vec::new();
    for mut c in 0..span.pow(dim as u32) {
        let o: Vec<i64> = (0..dim)
            .map(|_| {
                let v = (c % span) as i64 - r;
                c /= span;
                v
            })
            .collect();
        let len = (o.iter().map(|v| (v * v) as f64).sum::<f64>()).sqrt();
        if len <= radius {
            out.push((len, o));
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Ce3Outcome {
    pub datasets: usize,
    pub rows_sampled: u64,
    pub survivors_checked: u64,
    pub bin_width: f64,
    pub bins_total: usize,
    /// Bins whose centre lies beyond the outlier radius, and how many of
    /// them stayed empty.
    pub outlier_bins: usize,
    pub outlier_bins_empty: usize,
    pub hole_centres: usize,
    pub claims: Vec<Vec<f64>>,
    pub outliers: usize,
    pub hits: usize,
    /// Jaccard overlap between claims and train outliers.
    pub success: f64,
    pub stopped_early: bool,
}

/// Samples oracle data through the similarity filter and claims the centres
/// of significant holes beyond the outlier radius.
pub fn ce3_run(cfg: &Ce3Config, seed: u64) -> Result<Ce3Outcome> {
    let Some(_) = tail_radius(cfg.dim) else {
        return config_err(format!("hole search runs on 2 to 5 dimensions, got {}", cfg.dim));
    };
    if cfg.datasets == 0 || cfg.rows == 0 || !(cfg.tau > 0.0) || !(cfg.bins_per_tau >= 1.0) {
        return config_err("datasets, rows, tau and bins_per_tau must be positive");
    }
    let (train, _) = gauss_split(cfg.dim, seed)?;
    let outliers = label_outliers(&train, &OutlierRule::Radius { r: cfg.outlier_radius })?.rows(&train);
    let grid = SimilarityGrid::new(&train, cfg.tau)?;
    let model = oracle(&train)?;
    let mut hist = Histogram::new(cfg.dim, cfg.bound, cfg.tau / cfg.bins_per_tau, cfg.max_bins);
    let w = hist.width;
    let started = Instant::now();
    let limit = cfg.time_limit_secs.map(Duration::from_secs_f64);
    let (mut drawn, mut checked) = (0usize, 0u64);
    let mut stopped_early = false;
    while drawn < cfg.datasets {
        if drawn % 1000 == 0 && limit.is_some_and(|l| started.elapsed() > l) {
            stopped_early = true;
            break;
        }
        let ds = sample(&model, cfg.rows, seed::derive(seed, "ce3", drawn as u64));
        for r in ds.records() {
            let Some(i) = hist.index(r) else { continue };
            if hist.get(i) {
                continue;
            }
            checked += 1;
            if !grid.removes(r) {
                hist.set(i);
            }
        }
        drawn += 1;
    }
    let rows_sampled = (drawn * cfg.rows) as u64;

    // expected samples per bin factorize over the axes
    let per_axis = (rows_sampled as f64).powf(1.0 / cfg.dim as f64);
    let p1: Vec<f64> = (0..hist.nb)
        .map(|b| {
            let lo = -cfg.bound + b as f64 * w;
            (normal_cdf(lo + w) - normal_cdf(lo)) * per_axis
        })
        .collect();
    let rho = cfg.tau - w * (cfg.dim as f64).sqrt();
    if !(rho > 0.0) {
        return config_err("bins are too coarse for the threshold: no bin fits inside a hole");
    }
    let ball = offsets(cfg.dim, rho / w);
    let reach = (cfg.tau + w * (cfg.dim as f64).sqrt()) / w;
    let ring = offsets(cfg.dim, reach);

    let inner = (cfg.outlier_radius - cfg.tau).max(0.0);
    let mut c = vec![0i64; cfg.dim];
    let mut cc = vec![0i64; cfg.dim];
    let (mut outlier_bins, mut outlier_bins_empty) = (0, 0);
    let mut candidates: Vec<(f64, usize)> = Vec::new();
    for i in 0..hist.total() {
        hist.coords(i, &mut c);
        let norm2: f64 = c.iter().map(|&b| hist.centre(b).powi(2)).sum();
        let empty = !hist.get(i);
        if norm2 > cfg.outlier_radius * cfg.outlier_radius {
            outlier_bins += 1;
            outlier_bins_empty += usize::from(empty);
        }
        if !empty || norm2 < inner * inner {
            continue;
        }
        // the ball's bins are at most a few times denser than its centre
        let rough: f64 = c.iter().map(|&b| p1[b as usize]).product::<f64>() * ball.len() as f64;
        if rough < cfg.min_expected / 4.0 {
            continue;
        }
        let mut expected = 0.0;
        let mut hole = true;
        for (_, o) in &ball {
            for j in 0..cfg.dim {
                cc[j] = c[j] + o[j];
            }
            match hist.linear(&cc) {
                Some(k) if !hist.get(k) => expected += cc.iter().map(|&b| p1[b as usize]).product::<f64>(),
                _ => {
                    hole = false;
                    break;
                }
            }
        }
        if !hole || expected < cfg.min_expected {
            continue;
        }
        let mut clearance = reach * w;
        for (len, o) in &ring {
            for j in 0..cfg.dim {
                cc[j] = c[j] + o[j];
            }
            if hist.linear(&cc).is_none_or(|k| hist.get(k)) {
                clearance = len * w;
                break;
            }
        }
        candidates.push((clearance, i));
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let radius = cfg.suppression * cfg.tau;
    let mut centres: Vec<Vec<f64>> = Vec::new();
    for &(_, i) in &candidates {
        hist.coords(i, &mut c);
        let p: Vec<f64> = c.iter().map(|&b| hist.centre(b)).collect();
        if centres.iter().all(|q| DistanceMetric::Euclidean.distance(q, &p) > radius) {
            centres.push(p);
        }
    }
    let hole_centres = centres.len();
    let claims: Vec<Vec<f64>> = centres
        .into_iter()
        .filter(|p| p.iter().map(|x| x * x).sum::<f64>().sqrt() > cfg.outlier_radius)
        .collect();
    let mut used = vec![false; claims.len()];
    let mut hits = 0;
    for o in outliers.records() {
        let best = claims
            .iter()
            .enumerate()
            .filter(|(k, _)| !used[*k])
            .map(|(k, p)| (k, DistanceMetric::Euclidean.distance(p, o)))
            .filter(|(_, d)| *d <= cfg.tau / 2.0)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((k, _)) = best {
            used[k] = true;
            hits += 1;
        }
    }
    let union = claims.len() + outliers.len() - hits;
    Ok(Ce3Outcome {
        datasets: drawn,
        rows_sampled,
        survivors_checked: checked,
        bin_width: w,
        bins_total: hist.total(),
        outlier_bins,
        outlier_bins_empty,
        hole_centres,
        outliers: outliers.len(),
        hits,
        success: if union == 0 { 1.0 } else { hits as f64 / union as f64 },
        claims,
        stopped_early,
    })
}

/// The untargeted hole search as a report, checked against the expected
/// success for 2 and 3 dimensions.
pub fn ce3(cfg: &Ce3Config, seed: u64) -> Result<RunReport> {
    let mut rep = RunReport::new(&format!("ce3_{}d", cfg.dim), seed, hash_of(&(cfg, seed)));
    let started = Instant::now();
    let o = ce3_run(cfg, seed)?;
    rep.time("hole_search", started.elapsed());
    let cell = format!("{}d", cfg.dim);
    for (m, v) in [
        ("datasets", o.datasets as f64),
        ("rows_sampled", o.rows_sampled as f64),
        ("bin_width", o.bin_width),
        ("bins_total", o.bins_total as f64),
        ("outlier_bins", o.outlier_bins as f64),
        ("outlier_bins_empty", o.outlier_bins_empty as f64),
        ("hole_centres", o.hole_centres as f64),
        ("claims", o.claims.len() as f64),
        ("outliers", o.outliers as f64),
        ("hits", o.hits as f64),
        ("success", o.success),
    ] {
        rep.measure(&cell, m, v);
    }
    let detail = format!("{} of {} outliers, {} claims, success {:.3}", o.hits, o.outliers, o.claims.len(), o.success);
    match cfg.dim {
        2 => {
            rep.check("success_1.00±0.02", (o.success - 1.0).abs() <= 0.02, detail);
        }
        3 => {
            rep.check("success_at_least_0.80", o.success >= 0.80, detail);
        }
        _ => {
            rep.check("ran", true, detail);
        }
    }
    Ok(rep)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Probing {
    /// One axis at a time, every other column held at the target's value.
    Conditional,
    /// Plain oracle samples around the target.
    Unconditioned,
}

/// Parameters of the single-target hole search. The target sits at the
/// origin and train rows within `clear_radius` of it are removed first.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TargetedConfig {
    pub dim: usize,
    pub tau: f64,
    pub probing: Probing,
    /// Probes per axis (conditional) or histogram bins per axis.
    pub bins: usize,
    /// Probes cover `[-span, span]` on each axis.
    pub span: f64,
    pub clear_radius: f64,
    /// Oracle rows drawn in unconditioned mode.
    pub samples: usize,
}

impl TargetedConfig {
    pub fn new(dim: usize, probing: Probing) -> Self {
        TargetedConfig {
            dim,
            tau: 0.5,
            probing,
            bins: 100,
            span: 2.0,
            clear_radius: 2.0,
            samples: 1_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TargetedOutcome {
    pub probes: usize,
    pub estimate: Option<Vec<f64>>,
    /// Distance between the estimate and the target.
    pub error: Option<f64>,
    pub detected: bool,
}

fn train_with_target(cfg: &TargetedConfig, seed: u64) -> Result<Dataset> {
    let (train, _) = gauss_split(cfg.dim, seed)?;
    let origin = vec![0.0; cfg.dim];
    let cleared = train.filter(|_, r| DistanceMetric::Euclidean.distance(r, &origin) > cfg.clear_radius);
    Ok(cleared.extended([origin])?)
}

pub fn ce3_targeted_run(cfg: &TargetedConfig, seed: u64) -> Result<TargetedOutcome> {
    if cfg.dim == 0 || cfg.bins < 2 || !(cfg.tau > 0.0) || !(cfg.span > 0.0) {
        return config_err("dim, bins, tau and span must be positive");
    }
    if cfg.clear_radius < 2.0 * cfg.tau {
        return config_err("clear_radius must be at least twice tau so only the target carves the hole");
    }
    let train = train_with_target(cfg, seed)?;
    let w = 2.0 * cfg.span / cfg.bins as f64;
    let pos = |b: usize| -cfg.span + (b as f64 + 0.5) * w;
    // only the target can empty points this close to it
    let reach = (cfg.clear_radius - cfg.tau).min(cfg.span);
    let estimate = match cfg.probing {
        Probing::Conditional => {
            let mut probes = Vec::with_capacity(cfg.dim * cfg.bins);
            for j in 0..cfg.dim {
                for b in 0..cfg.bins {
                    let mut p = vec![0.0; cfg.dim];
                    p[j] = pos(b);
                    probes.push(p);
                }
            }
            let probes = train.filter(|_, _| false).extended(probes)?;
            let kept = similarity_filter(&train, &probes, cfg.tau, DistanceMetric::Euclidean)?;
            let mut removed = vec![true; probes.len()];
            let mut k = 0;
            for (i, p) in probes.records().iter().enumerate() {
                if k < kept.len() && kept.records()[k] == *p {
                    removed[i] = false;
                    k += 1;
                }
            }
            let mut est = Vec::with_capacity(cfg.dim);
            for j in 0..cfg.dim {
                let xs: Vec<f64> = (0..cfg.bins)
                    .filter(|&b| removed[j * cfg.bins + b] && pos(b).abs() <= reach)
                    .map(pos)
                    .collect();
                match (xs.first(), xs.last()) {
                    (Some(a), Some(b)) => est.push((a + b) / 2.0),
                    _ => {
                        return Ok(TargetedOutcome {
                            probes: probes.len(),
                            estimate: None,
                            error: None,
                            detected: false,
                        })
                    }
                }
            }
            (probes.len(), est)
        }
        Probing::Unconditioned => {
            if cfg.dim > 4 {
                return config_err("unconditioned probing is limited to 4 dimensions");
            }
            let grid = SimilarityGrid::new(&train, cfg.tau)?;
            let model = oracle(&train)?;
            let data = sample(&model, cfg.samples, seed::derive(seed, "ce3_targeted", 0));
            let total = cfg.bins.pow(cfg.dim as u32);
            let mut seen = vec![false; total];
            for r in data.records() {
                let mut idx = 0;
                let mut inside = true;
                for &x in r {
                    let b = ((x + cfg.span) / w).floor();
                    if !(b >= 0.0 && b < cfg.bins as f64) {
                        inside = false;
                        break;
                    }
                    idx = idx * cfg.bins + b as usize;
                }
                if inside && !seen[idx] && !grid.removes(r) {
                    seen[idx] = true;
                }
            }
            let mut sum = vec![0.0; cfg.dim];
            let mut count = 0usize;
            for (i, _) in seen.iter().enumerate().filter(|(_, s)| !**s) {
                let mut rest = i;
                let mut p = vec![0.0; cfg.dim];
                for j in (0..cfg.dim).rev() {
                    p[j] = pos(rest % cfg.bins);
                    rest /= cfg.bins;
                }
                if p.iter().map(|x| x * x).sum::<f64>().sqrt() <= reach {
                    for j in 0..cfg.dim {
                        sum[j] += p[j];
                    }
                    count += 1;
                }
            }
            if count == 0 {
                return Ok(TargetedOutcome {
                    probes: cfg.samples,
                    estimate: None,
                    error: None,
                    detected: false,
                });
            }
            (cfg.samples, sum.into_iter().map(|s| s / count as f64).collect())
        }
    };
    let (probes, est) = estimate;
    let error = est.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(TargetedOutcome {
        probes,
        detected: error <= cfg.tau / 2.0,
        estimate: Some(est),
        error: Some(error),
    })
}

pub fn ce3_targeted(cfg: &TargetedConfig, seed: u64) -> Result<RunReport> {
    let mut rep = RunReport::new(&format!("ce3_targeted_{}d", cfg.dim), seed, hash_of(&(cfg, seed)));
    let started = Instant::now();
    let o = ce3_targeted_run(cfg, seed)?;
    rep.time("targeted", started.elapsed());
    let cell = format!("{}d/{:?}", cfg.dim, cfg.probing).to_lowercase();
    rep.measure(&cell, "probes", o.probes as f64);
    rep.measure(&cell, "detected", f64::from(u8::from(o.detected)));
    if let Some(e) = o.error {
        rep.measure(&cell, "error", e);
    }
    rep.check(
        "target_detected",
        o.detected,
        o.error.map_or("no hole found".into(), |e| format!("estimate {e:.4} from the target")),
    );
    if cfg.probing == Probing::Conditional {
        rep.check(
            "probes_equal_dim_times_bins",
            o.probes == cfg.dim * cfg.bins,
            format!("{} probes", o.probes),
        );
    }
    Ok(rep)
}
