use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{canonical, ColumnSchema, Dataset, Schema};
use crate::seed;

/// Bounds of the continuous columns produced by the Gaussian generators.
/// Draws beyond ten standard deviations are clamped.
pub const GAUSS_BOUND: f64 = 10.0;

pub(crate) fn gauss_schema(dim: usize) -> Arc<Schema> {
    let cols = (0..dim)
        .map(|j| ColumnSchema::continuous(&format!("x{j}"), -GAUSS_BOUND, GAUSS_BOUND))
        .collect();
    Arc::new(Schema::new(cols).expect("generated names are unique"))
}

pub(crate) fn gauss_row(rng: &mut impl Rng, dim: usize, step: Option<f64>) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            let z = z.clamp(-GAUSS_BOUND, GAUSS_BOUND);
            match step {
                Some(h) => canonical((z / h).round() * h),
                None => z,
            }
        })
        .collect()
}

/// `n` iid standard-normal rows over `dim` continuous columns.
pub fn gen_gauss(dim: usize, n: usize, seed: u64) -> Dataset {
    let mut rng = seed::rng(seed);
    let rows = (0..n).map(|_| gauss_row(&mut rng, dim, None)).collect();
    Dataset::from_checked(gauss_schema(dim), rows, format!("gauss{dim}d"))
}

/// Like [`gen_gauss`] but every value is rounded to a multiple of `step`,
/// which makes exact matches between independent draws possible.
pub fn gen_gauss_grid(dim: usize, n: usize, step: f64, seed: u64) -> Dataset {
    assert!(step > 0.0, "grid step must be positive");
    let mut rng = seed::rng(seed);
    let rows = (0..n).map(|_| gauss_row(&mut rng, dim, Some(step))).collect();
    Dataset::from_checked(gauss_schema(dim), rows, format!("gauss{dim}d@{step}"))
}

pub const CENSUSLITE_CARDINALITIES: [usize; 6] = [8, 6, 5, 5, 2, 2];

const NOISE_SHARE: f64 = 0.02;

struct Profile {
    weight: f64,
    modes: [usize; 6],
    // probability of drawing the mode in each column; otherwise uniform over the rest
    sharpness: [f64; 6],
}

#[rustfmt::skip]
const PROFILES: [Profile; 12] = [
    // students living with parents
    Profile { weight: 0.14, modes: [0, 2, 0, 0, 0, 0], sharpness: [0.92, 0.85, 0.97, 0.92, 0.5, 0.97] },
    // young professionals
    Profile { weight: 0.13, modes: [1, 3, 0, 4, 1, 0], sharpness: [0.88, 0.8, 0.9, 0.9, 0.6, 0.75] },
    // married men, mid career
    Profile { weight: 0.15, modes: [2, 2, 1, 1, 1, 1], sharpness: [0.8, 0.8, 0.97, 0.97, 0.98, 0.7] },
    // married women, mid career
    Profile { weight: 0.13, modes: [2, 3, 1, 2, 0, 0], sharpness: [0.8, 0.8, 0.97, 0.97, 0.98, 0.7] },
    // established married households
    Profile { weight: 0.12, modes: [3, 2, 1, 1, 1, 1], sharpness: [0.85, 0.75, 0.95, 0.9, 0.9, 0.8] },
    // divorced, single earners
    Profile { weight: 0.08, modes: [3, 2, 2, 3, 0, 0], sharpness: [0.8, 0.8, 0.95, 0.92, 0.7, 0.85] },
    // late career
    Profile { weight: 0.07, modes: [4, 1, 1, 1, 1, 0], sharpness: [0.88, 0.85, 0.92, 0.9, 0.85, 0.8] },
    // graduate researchers
    Profile { weight: 0.05, modes: [1, 4, 0, 4, 0, 0], sharpness: [0.9, 0.85, 0.95, 0.95, 0.6, 0.9] },
    // separated, low income
    Profile { weight: 0.04, modes: [2, 1, 3, 3, 0, 0], sharpness: [0.85, 0.85, 0.95, 0.95, 0.7, 0.95] },
    // retirees
    Profile { weight: 0.04, modes: [5, 1, 1, 1, 1, 0], sharpness: [0.9, 0.9, 0.9, 0.9, 0.8, 0.9] },
    // elderly widowed with doctorates: rare
    Profile { weight: 0.015, modes: [7, 5, 4, 4, 0, 1], sharpness: [0.95, 0.95, 0.95, 0.95, 0.9, 0.95] },
    // very old widowed, no schooling: rare
    Profile { weight: 0.015, modes: [6, 0, 4, 0, 1, 1], sharpness: [0.95, 0.95, 0.95, 0.95, 0.9, 0.95] },
];

fn censuslite_schema() -> Arc<Schema> {
    let cols = vec![
        ColumnSchema::categorical(
            "age",
            ["17-24", "25-32", "33-40", "41-48", "49-56", "57-64", "65-74", "75+"],
        ),
        ColumnSchema::categorical(
            "education",
            ["none", "primary", "secondary", "bachelor", "master", "doctorate"],
        ),
        ColumnSchema::categorical("marital", ["never", "married", "divorced", "separated", "widowed"]),
        ColumnSchema::categorical(
            "relationship",
            ["own-child", "husband", "wife", "unmarried", "not-in-family"],
        ),
        ColumnSchema::categorical("sex", ["F", "M"]),
        ColumnSchema::categorical("income", ["<=50K", ">50K"]),
    ];
    Arc::new(Schema::new(cols).expect("static schema is valid"))
}

/// Six categorical census-like columns drawn from a fixed mixture of
/// correlated profiles plus a small share of uniformly random rows.
pub fn gen_censuslite(n: usize, seed: u64) -> Dataset {
    let mut rng = seed::rng(seed);
    let total: f64 = PROFILES.iter().map(|p| p.weight).sum();
    let rows = (0..n)
        .map(|_| {
            if rng.random::<f64>() < NOISE_SHARE {
                return CENSUSLITE_CARDINALITIES
                    .iter()
                    .map(|&k| rng.random_range(0..k) as f64)
                    .collect();
            }
            let mut u = rng.random::<f64>() * total;
            let profile = PROFILES
                .iter()
                .find(|p| {
                    u -= p.weight;
                    u < 0.0
                })
                .unwrap_or(&PROFILES[PROFILES.len() - 1]);
            (0..6)
                .map(|j| {
                    let k = CENSUSLITE_CARDINALITIES[j];
                    let mode = profile.modes[j];
                    if rng.random::<f64>() < profile.sharpness[j] {
                        return mode as f64;
                    }
                    let v = rng.random_range(0..k - 1);
                    (if v >= mode { v + 1 } else { v }) as f64
                })
                .collect()
        })
        .collect();
    Dataset::from_checked(censuslite_schema(), rows, "censuslite")
}
