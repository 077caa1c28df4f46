//! Run reports: JSON for the full record, tidy CSV for plotting.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use sbpm_attacks::reconsyn::TargetMode;
use sbpm_attacks::CallLedger;
use sbpm_core::metrics::PrivacyReport;
use sbpm_core::synthesis::UtilityScore;

use crate::error::Result;
use crate::spec::eps;

/// An asserted outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// One tidy measurement: which experiment, which cell of it, what, how much.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub experiment: String,
    pub cell: String,
    pub metric: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelledPrivacy {
    pub label: String,
    pub report: PrivacyReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelledUtility {
    pub label: String,
    pub score: UtilityScore,
}

/// Harness-side outcome of one attack run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackSummary {
    pub label: String,
    pub model: String,
    #[serde(with = "eps")]
    pub epsilon: f64,
    pub target: TargetMode,
    pub n_train: usize,
    /// Ground-truth outliers in the train data.
    pub n_out: usize,
    /// Recall over the attack's targets: outliers, or every train row in
    /// any-record mode.
    pub recall: f64,
    /// Recall over the labelled outliers, whatever the mode.
    pub outlier_recall: f64,
    pub precision: f64,
    pub precision_by_convention: bool,
    pub reconstructed: usize,
    pub calls: CallLedger,
    /// The provider's own counters agree with the attack's ledger.
    pub ledger_matches_provider: bool,
    pub history_size: usize,
    /// History entries whose stored distance differs from brute force.
    pub history_mismatches: usize,
    pub truncated: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Timing {
    pub label: String,
    pub elapsed: Duration,
}

/// Everything an experiment produced. The JSON rendering is a pure function
/// of the experiment's parameters; wall-clock timings are kept aside.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub experiment: String,
    pub seed: u64,
    pub config_hash: String,
    pub checks: Vec<Check>,
    pub privacy: Vec<LabelledPrivacy>,
    pub attacks: Vec<AttackSummary>,
    pub utility: Vec<LabelledUtility>,
    pub measurements: Vec<Measurement>,
    #[serde(skip)]
    pub timings: Vec<Timing>,
}

impl RunReport {
    pub fn new(experiment: &str, seed: u64, config_hash: String) -> Self {
        RunReport {
            experiment: experiment.into(),
            seed,
            config_hash,
            checks: Vec::new(),
            privacy: Vec::new(),
            attacks: Vec::new(),
            utility: Vec::new(),
            measurements: Vec::new(),
            timings: Vec::new(),
        }
    }

    pub fn check(&mut self, name: &str, pass: bool, detail: impl Into<String>) -> bool {
        self.checks.push(Check {
            name: name.into(),
            pass,
            detail: detail.into(),
        });
        pass
    }

    pub fn measure(&mut self, cell: &str, metric: &str, value: f64) {
        self.measurements.push(Measurement {
            experiment: self.experiment.clone(),
            cell: cell.into(),
            metric: metric.into(),
            value,
        });
    }

    pub fn privacy(&mut self, label: &str, report: PrivacyReport) {
        self.privacy.push(LabelledPrivacy {
            label: label.into(),
            report,
        });
    }

    pub fn utility(&mut self, label: &str, score: UtilityScore) {
        self.utility.push(LabelledUtility {
            label: label.into(),
            score,
        });
    }

    pub fn time(&mut self, label: &str, elapsed: Duration) {
        self.timings.push(Timing {
            label: label.into(),
            elapsed,
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failed(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    /// Folds another report in, prefixing its check names.
    pub fn absorb(&mut self, other: RunReport) {
        let prefix = other.experiment.clone();
        self.checks.extend(other.checks.into_iter().map(|mut c| {
            c.name = format!("{prefix}/{}", c.name);
            c
        }));
        self.privacy.extend(other.privacy);
        self.attacks.extend(other.attacks);
        self.utility.extend(other.utility);
        self.measurements.extend(other.measurements);
        self.timings.extend(other.timings);
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports are plain data");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn tidy_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for m in &self.measurements {
            w.serialize(m)?;
        }
        if self.measurements.is_empty() {
            w.write_record(["experiment", "cell", "metric", "value"])?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv output is UTF-8"))
    }

    pub fn timings_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["label", "seconds"])?;
        for t in &self.timings {
            w.write_record([t.label.clone(), format!("{:.3}", t.elapsed.as_secs_f64())])?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv output is UTF-8"))
    }

    /// Writes `<name>.json`, `<name>.csv` and `<name>.timings.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let files = [
            (dir.join(format!("{}.json", self.experiment)), self.to_json()),
            (dir.join(format!("{}.csv", self.experiment)), self.tidy_csv()?),
            (dir.join(format!("{}.timings.csv", self.experiment)), self.timings_csv()?),
        ];
        for (path, body) in &files {
            std::fs::write(path, body)?;
        }
        Ok(files.into_iter().map(|(p, _)| p).collect())
    }

    /// Human-readable summary.
    pub fn render(&self) -> String {
        let mut out = format!("{} (seed {}, config {})\n", self.experiment, self.seed, &self.config_hash[..12.min(self.config_hash.len())]);
        for c in &self.checks {
            out += &format!("  [{}] {}: {}\n", if c.pass { "ok" } else { "FAILED" }, c.name, c.detail);
        }
        for p in &self.privacy {
            let r = &p.report;
            out += &format!(
                "  privacy {}: ims {:.4}/{:.4} {} | dcr {:.4}/{:.4} {} | nndr {:.4}/{:.4} {}\n",
                p.label,
                r.ims.share_synth,
                r.ims.share_test,
                flag(r.ims.pass),
                r.dcr.pct5_synth,
                r.dcr.pct5_test,
                flag(r.dcr.pass),
                r.nndr.pct5_synth,
                r.nndr.pct5_test,
                flag(r.nndr.pass)
            );
        }
        for a in &self.attacks {
            out += &format!(
                "  attack {}: recall {:.3}, outlier recall {:.3}, precision {:.3}, {} reconstructed, {} sample + {} metrics calls\n",
                a.label, a.recall, a.outlier_recall, a.precision, a.reconstructed, a.calls.sample, a.calls.metrics
            );
        }
        for u in &self.utility {
            out += &format!(
                "  utility {}: marginal {:.4}, mi {:.4}\n",
                u.label, u.score.marginal_diff, u.score.mi_diff
            );
        }
        out
    }
}

fn flag(p: bool) -> &'static str {
    if p {
        "pass"
    } else {
        "fail"
    }
}
