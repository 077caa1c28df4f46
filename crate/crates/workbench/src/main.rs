use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use sbpm_attacks::reconsyn::TargetMode;
use sbpm_core::metrics::{privacy_report, DistanceMetric};
use sbpm_core::tabular::{read_csv, split, write_csv, BinStrategy, Discretizer};
use sbpm_provider::{serve, Provider, RemoteProvider};
use sbpm_workbench::ce::{ce1, ce2, ce4, ce5, ce6, CE6_BINS};
use sbpm_workbench::experiments::{attribute_experiment, dp_sweep, membership_experiment, run_attack, run_attack_via};
use sbpm_workbench::spec::{DataSource, ExperimentSpec, ModelName};
use sbpm_workbench::swiss::{ce3, ce3_targeted, Ce3Config, Probing, TargetedConfig};
use sbpm_workbench::{RunReport, WorkbenchError};

#[derive(Parser)]
#[command(name = "sbpm", version, about = "Audit similarity-based privacy metrics on synthetic tabular data")]
struct Cli {
    /// Experiment spec (TOML); flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate, split or discretize datasets.
    #[command(subcommand)]
    Data(DataCmd),
    /// Run a provider.
    #[command(subcommand)]
    Provider(ProviderCmd),
    /// Privacy metrics of a synthetic sample.
    #[command(subcommand)]
    Metrics(MetricsCmd),
    /// Attacks against a provider.
    #[command(subcommand)]
    Attack(AttackCmd),
    /// Re-run a counter-example.
    Reproduce(Reproduce),
    /// Parameter sweeps.
    #[command(subcommand)]
    Sweep(SweepCmd),
    /// Work with saved reports.
    #[command(subcommand)]
    Report(ReportCmd),
}

#[derive(Subcommand)]
enum DataCmd {
    /// Write a generated dataset as CSV.
    Gen {
        #[arg(long, value_enum)]
        dataset: Option<Source>,
        #[arg(long)]
        rows: Option<usize>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        step: Option<f64>,
    },
    /// Split a CSV file into train.csv and test.csv.
    Split {
        input: PathBuf,
    },
    /// Bin the continuous columns of a CSV file.
    Discretize {
        input: PathBuf,
        #[arg(long, value_enum, default_value = "uniform")]
        strategy: Strategy,
        #[arg(long, default_value_t = 10)]
        bins: usize,
    },
}

#[derive(Subcommand)]
enum ProviderCmd {
    /// Serve the spec's provider over HTTP until killed.
    Serve {
        #[arg(long, env = "SBPM_BIND", default_value = "127.0.0.1:8080")]
        bind: String,
        #[command(flatten)]
        model: ModelArgs,
    },
}

#[derive(Subcommand)]
enum MetricsCmd {
    /// IMS, DCR and NNDR of a synthetic CSV against train and test CSVs.
    Report {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        synth: PathBuf,
        #[arg(long, value_enum)]
        metric: Option<Metric>,
    },
}

#[derive(Subcommand)]
enum AttackCmd {
    /// Membership or attribute inference from two (or k) metrics calls.
    Difference {
        #[arg(long, value_enum, default_value = "membership")]
        mode: DifferenceMode,
        #[arg(long, default_value_t = 100)]
        targets: usize,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// ReconSyn; writes the AttackResult JSON.
    Reconsyn {
        #[arg(long, value_enum)]
        target: Option<Target>,
        #[command(flatten)]
        model: ModelArgs,
        /// Attack a running provider instead of an in-process one. It must
        /// serve the same spec and seed so the result can be scored.
        #[arg(long)]
        remote: Option<String>,
    },
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, value_enum)]
    model: Option<Model>,
    /// Privacy budget; `inf` for none.
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Args)]
struct Reproduce {
    #[arg(value_enum)]
    which: Ce,
    /// Repetitions (seeds for ce2, samples for ce4/ce5/ce6).
    #[arg(long)]
    reps: Option<usize>,
    /// Dimensions for ce3.
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Oracle datasets for ce3.
    #[arg(long)]
    datasets: Option<usize>,
    /// Wall-clock cap for ce3 sampling, in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    /// ce3: probe one planted target instead of searching for all outliers.
    #[arg(long)]
    targeted: bool,
    /// ce3 --targeted: sample the oracle instead of probing column by column.
    #[arg(long)]
    unconditioned: bool,
}

#[derive(Subcommand)]
enum SweepCmd {
    /// ReconSyn and utility over models x epsilons x seeds.
    Dp,
}

#[derive(Subcommand)]
enum ReportCmd {
    /// Print a saved JSON report as text.
    Render { report: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Source {
    Censuslite,
    Gauss,
    GaussGrid,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Strategy {
    Uniform,
    Quantile,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Metric {
    Hamming,
    Euclidean,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum DifferenceMode {
    Membership,
    Attribute,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Target {
    Outliers,
    AnyRecord,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Model {
    Oracle,
    Random,
    Independent,
    PrivbayesLite,
    Replay,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Ce {
    Ce1,
    Ce2,
    Ce3,
    Ce4,
    Ce5,
    Ce6,
}

impl From<Model> for ModelName {
    fn from(m: Model) -> Self {
        match m {
            Model::Oracle => ModelName::Oracle,
            Model::Random => ModelName::Random,
            Model::Independent => ModelName::Independent,
            Model::PrivbayesLite => ModelName::PrivbayesLite,
            Model::Replay => ModelName::Replay,
        }
    }
}

fn load_spec(cli: &Cli) -> anyhow::Result<ExperimentSpec> {
    let mut spec = match &cli.config {
        Some(p) => ExperimentSpec::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ExperimentSpec::default(),
    };
    if let Some(s) = cli.seed {
        spec.seed = s;
    }
    if let Some(o) = &cli.out {
        spec.out = o.clone();
    }
    Ok(spec)
}

fn apply_model(spec: &mut ExperimentSpec, m: &ModelArgs) -> anyhow::Result<()> {
    if let Some(model) = m.model {
        spec.model = model.into();
    }
    if let Some(e) = m.epsilon {
        spec.epsilon = e;
    }
    spec.validate()?;
    Ok(())
}

fn create(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Writes the report and prints it; the exit code reflects its checks.
fn finish(report: &RunReport, dir: &Path) -> anyhow::Result<ExitCode> {
    create(dir)?;
    for p in report.write(dir)? {
        eprintln!("wrote {}", p.display());
    }
    print!("{}", report.render());
    Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let mut spec = load_spec(&cli)?;
    let out = spec.out.clone();
    match cli.command {
        Command::Data(DataCmd::Gen { dataset, rows, dim, step }) => {
            if let Some(d) = dataset {
                spec.dataset = match d {
                    Source::Censuslite => DataSource::Censuslite,
                    Source::Gauss => DataSource::Gauss,
                    Source::GaussGrid => DataSource::GaussGrid,
                };
            }
            spec.rows = rows.unwrap_or(spec.rows);
            spec.dim = dim.unwrap_or(spec.dim);
            spec.grid_step = step.unwrap_or(spec.grid_step);
            spec.validate()?;
            let ds = spec.dataset(0)?;
            create(&out)?;
            let path = out.join("data.csv");
            write_csv(&ds, &path)?;
            println!("{}", path.display());
        }
        Command::Data(DataCmd::Split { input }) => {
            let ds = read_csv(&input)?;
            let (train, test) = split(&ds, spec.seed)?;
            create(&out)?;
            for (name, part) in [("train.csv", &train), ("test.csv", &test)] {
                let path = out.join(name);
                write_csv(part, &path)?;
                println!("{}", path.display());
            }
        }
        Command::Data(DataCmd::Discretize { input, strategy, bins }) => {
            let ds = read_csv(&input)?;
            let strategy = match strategy {
                Strategy::Uniform => BinStrategy::Uniform,
                Strategy::Quantile => BinStrategy::Quantile,
            };
            let binned = Discretizer::fit(&ds, strategy, bins)?.apply(&ds)?;
            create(&out)?;
            let path = out.join("discretized.csv");
            write_csv(&binned, &path)?;
            println!("{}", path.display());
        }
        Command::Provider(ProviderCmd::Serve { bind, model }) => {
            apply_model(&mut spec, &model)?;
            let data = spec.dataset(0)?;
            let pc = spec.provider_config(&data, spec.model, spec.epsilon, 0);
            serve(Arc::new(Provider::new(&data, &pc)?), &bind)?;
        }
        Command::Metrics(MetricsCmd::Report { train, test, synth, metric }) => {
            let (train, test, synth) = (read_csv(&train)?, read_csv(&test)?, read_csv(&synth)?);
            let metric = match metric {
                Some(Metric::Hamming) => DistanceMetric::Hamming,
                Some(Metric::Euclidean) => DistanceMetric::Euclidean,
                None => spec.distance_metric(&train),
            };
            let report = privacy_report(&train, &test, &synth, metric)?;
            create(&out)?;
            let text = serde_json::to_string_pretty(&report)? + "\n";
            std::fs::write(out.join("metrics.json"), &text)?;
            print!("{text}");
        }
        Command::Attack(AttackCmd::Difference { mode, targets, model }) => {
            apply_model(&mut spec, &model)?;
            let report = match mode {
                DifferenceMode::Membership => membership_experiment(&spec, spec.model, targets, 0)?,
                DifferenceMode::Attribute => attribute_experiment(&spec, spec.model, targets, 0)?,
            };
            return finish(&report, &out);
        }
        Command::Attack(AttackCmd::Reconsyn { target, model, remote }) => {
            apply_model(&mut spec, &model)?;
            if let Some(t) = target {
                spec.target = match t {
                    Target::Outliers => TargetMode::OutliersOnly,
                    Target::AnyRecord => TargetMode::AnyRecord,
                };
            }
            let (report, result) = match remote {
                None => run_attack(&spec)?,
                Some(addr) => run_attack_via(&spec, Some(&RemoteProvider::connect(&addr)?))?,
            };
            create(&out)?;
            let path = out.join(format!("{}.attack.json", spec.name));
            std::fs::write(&path, serde_json::to_string_pretty(&result)? + "\n")?;
            eprintln!("wrote {}", path.display());
            return finish(&report, &out);
        }
        Command::Reproduce(r) => {
            let seed = spec.seed;
            let report = match r.which {
                Ce::Ce1 => ce1(seed)?,
                Ce::Ce2 => ce2(r.reps.unwrap_or(20), seed)?,
                Ce::Ce3 if r.targeted => {
                    let probing = if r.unconditioned { Probing::Unconditioned } else { Probing::Conditional };
                    ce3_targeted(&TargetedConfig::new(r.dim, probing), seed)?
                }
                Ce::Ce3 => {
                    let mut cfg = Ce3Config::for_dim(r.dim)?;
                    cfg.datasets = r.datasets.unwrap_or(cfg.datasets);
                    cfg.time_limit_secs = r.time_limit;
                    ce3(&cfg, seed)?
                }
                Ce::Ce4 => ce4(r.reps.unwrap_or(1000), seed)?,
                Ce::Ce5 => ce5(r.reps.unwrap_or(1000), seed)?,
                Ce::Ce6 => ce6(&CE6_BINS, r.reps.unwrap_or(20), seed)?,
            };
            return finish(&report, &out);
        }
        Command::Sweep(SweepCmd::Dp) => {
            spec.validate()?;
            return finish(&dp_sweep(&spec)?, &out);
        }
        Command::Report(ReportCmd::Render { report }) => {
            let text = std::fs::read_to_string(&report).with_context(|| format!("reading {}", report.display()))?;
            print!("{}", RunReport::from_json(&text)?.render());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = matches!(e.downcast_ref(), Some(WorkbenchError::Config(_) | WorkbenchError::Toml(_)));
            if usage {
                return ExitCode::from(2);
            }
            ExitCode::FAILURE
        }
    }
}

