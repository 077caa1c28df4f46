//! The flat experiment configuration read from TOML files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use sbpm_attacks::locator::{LocatorConfig, LocatorStrategy};
use sbpm_attacks::reconsyn::{AttackConfig, TargetMode};
use sbpm_core::metrics::DistanceMetric;
use sbpm_core::seed;
use sbpm_core::synthesis::{DpBudget, GeneratorKind};
use sbpm_core::tabular::{gen_censuslite, gen_gauss, gen_gauss_grid, read_csv, Dataset, OutlierRule};
use sbpm_provider::{Filters, ProviderConfig};

use crate::error::{config_err, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Censuslite,
    Gauss,
    GaussGrid,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    Oracle,
    Random,
    Independent,
    PrivbayesLite,
    Replay,
}

impl ModelName {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelName::Oracle => "oracle",
            ModelName::Random => "random",
            ModelName::Independent => "independent",
            ModelName::PrivbayesLite => "privbayes_lite",
            ModelName::Replay => "replay",
        }
    }
}

impl std::str::FromStr for ModelName {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("unknown model `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricChoice {
    /// Hamming for all-categorical data, Euclidean otherwise.
    Auto,
    Hamming,
    Euclidean,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutlierChoice {
    /// Radius rule for Gaussian data, smallest mixture clusters otherwise.
    Auto,
    Radius,
    Gmm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocatorName {
    SmallestClusters,
    LowDensity,
}

/// Serde helpers writing an infinite epsilon as the string `"inf"`, so JSON
/// output stays valid. TOML accepts both `inf` and `"inf"`.
/// `inf` for an unlimited budget, the plain number otherwise.
pub fn eps_label(e: f64) -> String {
    if e.is_finite() {
        format!("{e}")
    } else {
        "inf".into()
    }
}

pub mod eps {
    use super::*;

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }

    fn parse(r: Raw) -> std::result::Result<f64, String> {
        match r {
            Raw::Num(x) => Ok(x),
            Raw::Text(t) => t.parse::<f64>().map_err(|_| format!("`{t}` is not a number")),
        }
    }

    pub fn serialize<S: Serializer>(e: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if e.is_finite() {
            s.serialize_f64(*e)
        } else {
            s.serialize_str(if *e > 0.0 { "inf" } else { "-inf" })
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        parse(Raw::deserialize(d)?).map_err(serde::de::Error::custom)
    }

    pub mod list {
        use super::*;

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
            use serde::ser::SerializeSeq;
            let mut seq = s.serialize_seq(Some(v.len()))?;
            for e in v {
                if e.is_finite() {
                    seq.serialize_element(e)?;
                } else {
                    seq.serialize_element(if *e > 0.0 { "inf" } else { "-inf" })?;
                }
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
            Vec::<Raw>::deserialize(d)?
                .into_iter()
                .map(|r| parse(r).map_err(serde::de::Error::custom))
                .collect()
        }
    }
}

/// One experiment, as a flat key-value document. Every key is optional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Used for output file names.
    pub name: String,
    /// Master seed; every component derives its own seed from it.
    pub seed: u64,
    /// Directory receiving reports.
    pub out: PathBuf,

    pub dataset: DataSource,
    /// Rows before the train/test split.
    pub rows: usize,
    /// Columns of the Gaussian datasets.
    pub dim: usize,
    /// Rounding step of `gauss_grid` data.
    pub grid_step: f64,
    /// Input file for `dataset = "csv"`.
    pub csv: Option<PathBuf>,

    pub outliers: OutlierChoice,
    pub outlier_radius: f64,
    /// Mixture components of the outlier labelling.
    pub outlier_k: usize,
    /// Outlier budget as a share of the train rows.
    pub outlier_share: f64,

    pub model: ModelName,
    pub max_parents: usize,
    #[serde(with = "eps")]
    pub epsilon: f64,
    pub metric: MetricChoice,
    pub similarity_filter: Option<f64>,
    pub outlier_filter: Option<f64>,

    pub target: TargetMode,
    pub rounds: usize,
    pub search: bool,
    pub search_depth: usize,
    pub search_below: Option<f64>,
    pub padding_copies: usize,
    pub padding_pool: usize,
    pub max_padding_tries: usize,
    pub locator: LocatorName,
    pub locator_k: usize,
    pub locator_margin: f64,
    pub one_call: bool,
    pub call_budget: Option<u64>,

    /// Models of the DP sweep.
    pub sweep_models: Vec<ModelName>,
    #[serde(with = "eps::list")]
    pub sweep_epsilons: Vec<f64>,
    /// Repetitions of every sweep cell.
    pub sweep_seeds: usize,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            name: "experiment".into(),
            seed: 0,
            out: PathBuf::from("out"),
            dataset: DataSource::Censuslite,
            rows: 6000,
            dim: 2,
            grid_step: 0.1,
            csv: None,
            outliers: OutlierChoice::Auto,
            outlier_radius: 2.15,
            outlier_k: 10,
            outlier_share: 0.1,
            model: ModelName::Independent,
            max_parents: 2,
            epsilon: f64::INFINITY,
            metric: MetricChoice::Auto,
            similarity_filter: None,
            outlier_filter: None,
            target: TargetMode::OutliersOnly,
            rounds: 1000,
            search: true,
            search_depth: 2,
            search_below: None,
            padding_copies: 100,
            padding_pool: 1000,
            max_padding_tries: 200,
            locator: LocatorName::LowDensity,
            locator_k: 10,
            locator_margin: 1.5,
            one_call: false,
            call_budget: None,
            sweep_models: vec![ModelName::Independent, ModelName::PrivbayesLite],
            sweep_epsilons: vec![0.1, 1.0, f64::INFINITY],
            sweep_seeds: 5,
        }
    }
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("the spec is plain data")
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || !self.rows.is_multiple_of(2) {
            return config_err(format!("rows must be even and positive, got {}", self.rows));
        }
        if self.dim == 0 {
            return config_err("dim must be at least 1");
        }
        if !(self.grid_step > 0.0) {
            return config_err("grid_step must be positive");
        }
        if self.dataset == DataSource::Csv && self.csv.is_none() {
            return config_err("dataset = \"csv\" needs a `csv` path");
        }
        if !(self.epsilon > 0.0) || self.sweep_epsilons.iter().any(|e| !(*e > 0.0)) {
            return config_err("epsilon must be positive (use \"inf\" for no noise)");
        }
        if !(0.0..=1.0).contains(&self.outlier_share) {
            return config_err("outlier_share must lie in [0, 1]");
        }
        if self.model == ModelName::Oracle && !matches!(self.dataset, DataSource::Gauss | DataSource::GaussGrid) {
            return config_err("the oracle model only fits Gaussian datasets");
        }
        if self.sweep_seeds == 0 {
            return config_err("sweep_seeds must be at least 1");
        }
        self.attack_config(0, 1, 1).validate()?;
        Ok(())
    }

    /// Hex SHA-256 of the canonical TOML rendering.
    pub fn config_hash(&self) -> String {
        hash_bytes(self.to_toml().as_bytes())
    }

    /// The full dataset before splitting; `rep` selects an independent draw.
    pub fn dataset(&self, rep: u64) -> Result<Dataset> {
        let s = seed::derive(self.seed, "data", rep);
        Ok(match self.dataset {
            DataSource::Censuslite => gen_censuslite(self.rows, s),
            DataSource::Gauss => gen_gauss(self.dim, self.rows, s),
            DataSource::GaussGrid => gen_gauss_grid(self.dim, self.rows, self.grid_step, s),
            DataSource::Csv => read_csv(self.csv.as_ref().expect("validated"))?,
        })
    }

    pub fn distance_metric(&self, ds: &Dataset) -> DistanceMetric {
        match self.metric {
            MetricChoice::Hamming => DistanceMetric::Hamming,
            MetricChoice::Euclidean => DistanceMetric::Euclidean,
            MetricChoice::Auto if ds.schema().all_categorical() => DistanceMetric::Hamming,
            MetricChoice::Auto => DistanceMetric::Euclidean,
        }
    }

    pub fn generator(&self, model: ModelName) -> GeneratorKind {
        match model {
            ModelName::Oracle => GeneratorKind::Oracle {
                dim: self.dim,
                step: (self.dataset == DataSource::GaussGrid).then_some(self.grid_step),
            },
            ModelName::Random => GeneratorKind::Random,
            ModelName::Independent => GeneratorKind::Independent,
            ModelName::PrivbayesLite => GeneratorKind::PrivbayesLite {
                max_parents: self.max_parents,
            },
            ModelName::Replay => GeneratorKind::Replay,
        }
    }

    pub fn provider_config(&self, ds: &Dataset, model: ModelName, epsilon: f64, rep: u64) -> ProviderConfig {
        let mut cfg = ProviderConfig::new(
            self.generator(model),
            self.distance_metric(ds),
            seed::derive(self.seed, "provider", rep),
        );
        if epsilon.is_finite() {
            cfg.dp = Some(DpBudget { epsilon, delta: None });
        }
        cfg.filters = Filters {
            similarity: self.similarity_filter,
            outlier: self.outlier_filter,
        };
        cfg
    }

    /// Ground-truth outlier rule for a train half of `n_train` rows.
    pub fn outlier_rule(&self, ds: &Dataset, n_train: usize, rep: u64) -> OutlierRule {
        let radius = match self.outliers {
            OutlierChoice::Radius => true,
            OutlierChoice::Gmm => false,
            OutlierChoice::Auto => ds.schema().all_continuous(),
        };
        if radius {
            OutlierRule::Radius { r: self.outlier_radius }
        } else {
            OutlierRule::GmmSmallest {
                k: self.outlier_k,
                budget: (self.outlier_share * n_train as f64).round() as usize,
                seed: seed::derive(self.seed, "outliers", rep),
            }
        }
    }

    pub fn attack_config(&self, rep: u64, n_train: usize, n_out: usize) -> AttackConfig {
        AttackConfig {
            n_train,
            n_out,
            rounds: self.rounds,
            search: self.search,
            search_depth: self.search_depth,
            search_below: self.search_below,
            padding_copies: self.padding_copies,
            locator: LocatorConfig {
                k: self.locator_k,
                strategy: match self.locator {
                    LocatorName::SmallestClusters => LocatorStrategy::SmallestClusters,
                    LocatorName::LowDensity => LocatorStrategy::LowDensity {
                        margin: self.locator_margin,
                    },
                },
                ..LocatorConfig::default()
            },
            target: self.target,
            one_call: self.one_call,
            call_budget: self.call_budget,
            padding_pool: self.padding_pool,
            max_padding_tries: self.max_padding_tries,
            seed: seed::derive(self.seed, "attack", rep),
        }
    }
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of any serializable parameter set, via its JSON rendering.
pub fn hash_of<T: Serialize>(params: &T) -> String {
    hash_bytes(&serde_json::to_vec(params).expect("parameters are plain data"))
}
