//! `slate-ope`: off-policy evaluation of slate policies from the command
//! line.
//!
//! Subcommands: `evaluate` (run estimators on a JSONL dataset),
//! `simulate` (generate a synthetic dataset), `bench` (the full Monte
//! Carlo grid), and `oracle` (exact population values for an instance).
//! Exit codes: 0 on success, 2 on validation errors, 3 when an
//! enumeration cap is exceeded.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use slate_ope::bench::run_benchmark;
use slate_ope::estimators::EstimatorKind;
use slate_ope::jsonl;
use slate_ope::oracle::{enumerate_ground_truth, enumerate_moments};
use slate_ope::simulator::{
    generate_logs, AdditiveForm, RewardKind, RewardModel, SimConfig, DEFAULT_DATA_SEED,
    DEFAULT_TENSOR_SEED,
};
use slate_ope::{
    run_estimator, variance_report, EstimateReport, Error, FactoredPolicy, Result, SlateSchema,
};

#[derive(Parser)]
#[command(name = "slate-ope", version, about = "Off-policy evaluation for slate bandits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    /// First-slot-dominant additive tensor with Gaussian parts.
    #[default]
    Skewed,
    /// Plain-sum additive tensor with Gaussian parts.
    Additive,
}

impl From<ModelArg> for AdditiveForm {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Skewed => AdditiveForm::FirstSlotGeometric,
            ModelArg::Additive => AdditiveForm::Sum,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
enum RewardKindArg {
    #[default]
    Bernoulli,
    Deterministic,
}

impl From<RewardKindArg> for RewardKind {
    fn from(k: RewardKindArg) -> Self {
        match k {
            RewardKindArg::Bernoulli => RewardKind::BernoulliRates,
            RewardKindArg::Deterministic => RewardKind::DeterministicMeans,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run estimators on a JSONL dataset and print their reports.
    Evaluate {
        /// JSONL dataset (schema header line followed by records).
        #[arg(long)]
        input: PathBuf,
        /// Comma list from: pi, wpi, picvs, picvm, crossfit.
        #[arg(long, default_value = "pi,wpi,picvs,picvm")]
        estimators: String,
        /// Seed for the cross-fit fold shuffle.
        #[arg(long, default_value_t = DEFAULT_DATA_SEED)]
        seed: u64,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
        /// Also write the report here.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Generate a synthetic logged dataset as JSONL.
    Simulate {
        /// Benchmark config (JSON); supplies schema, policies, model and
        /// seeds.
        #[arg(long, conflicts_with_all = ["cardinalities", "model_file"])]
        config: Option<PathBuf>,
        /// Per-slot action counts, e.g. `10,10`.
        #[arg(long, value_delimiter = ',')]
        cardinalities: Option<Vec<usize>>,
        /// Load the reward model from JSON instead of sampling one.
        #[arg(long)]
        model_file: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t)]
        model: ModelArg,
        #[arg(long, value_enum, default_value_t)]
        reward_kind: RewardKindArg,
        /// Tensor index within a config (selects the sampled model).
        #[arg(long, default_value_t = 0)]
        tensor: usize,
        /// Seed for sampling the reward model.
        #[arg(long, default_value_t = DEFAULT_TENSOR_SEED)]
        tensor_seed: u64,
        /// Seed for drawing the logged records.
        #[arg(long, default_value_t = DEFAULT_DATA_SEED)]
        seed: u64,
        /// Number of records.
        #[arg(long)]
        n: usize,
        /// Target slate, e.g. `0,0` (defaults to all zeros).
        #[arg(long, value_delimiter = ',')]
        target_slate: Option<Vec<usize>>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Run the benchmark grid described by a config file.
    Bench {
        /// Benchmark config (JSON). Unset fields take the documented
        /// defaults.
        #[arg(long)]
        config: PathBuf,
        /// Comma list from: pi, wpi, picvs, picvm, crossfit.
        #[arg(long, default_value = "pi,wpi,picvs,picvm,crossfit")]
        estimators: String,
        /// Worker threads (default: all cores). Results are identical
        /// for any value.
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
        /// Write the report here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Enumerate exact population values (theta, policy value, moments,
    /// variance constants) for an instance.
    Oracle {
        /// Load the reward model from JSON.
        #[arg(long, conflicts_with = "cardinalities")]
        model_file: Option<PathBuf>,
        /// Per-slot action counts for a sampled model.
        #[arg(long, value_delimiter = ',')]
        cardinalities: Option<Vec<usize>>,
        #[arg(long, value_enum, default_value_t)]
        model: ModelArg,
        #[arg(long, value_enum, default_value_t)]
        reward_kind: RewardKindArg,
        #[arg(long, default_value_t = DEFAULT_TENSOR_SEED)]
        tensor_seed: u64,
        /// Target slate (defaults to all zeros).
        #[arg(long, value_delimiter = ',')]
        target_slate: Option<Vec<usize>>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_cap() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Evaluate { input, estimators, seed, format, output } => {
            let dataset = jsonl::read_dataset_path(&input)?;
            let kinds = parse_estimators(&estimators)?;
            let reports: Vec<EstimateReport> = kinds
                .iter()
                .map(|&kind| run_estimator(kind, &dataset, None, seed))
                .collect::<Result<_>>()?;
            let text = match format {
                Format::Json => {
                    let mut s = serde_json::to_string_pretty(&reports)
                        .expect("reports serialize");
                    s.push('\n');
                    s
                }
                Format::Csv => reports_csv(&reports),
            };
            emit(&text, output.as_deref())
        }
        Command::Simulate {
            config,
            cardinalities,
            model_file,
            model,
            reward_kind,
            tensor,
            tensor_seed,
            seed,
            n,
            target_slate,
            output,
        } => {
            let (reward_model, logging, target) = if let Some(path) = config {
                let cfg = load_config(&path)?;
                let m = cfg.sample_tensor(tensor)?;
                (m, cfg.logging_policy()?, cfg.target_policy()?)
            } else {
                let m = load_or_sample_model(
                    model_file.as_deref(),
                    cardinalities.as_deref(),
                    model,
                    reward_kind,
                    tensor_seed,
                )?;
                let schema = m.schema().clone();
                let slate = target_slate.unwrap_or_else(|| vec![0; schema.num_slots()]);
                let target = FactoredPolicy::deterministic(schema.clone(), &slate)?;
                (m, FactoredPolicy::uniform(schema), target)
            };
            let dataset = generate_logs(&reward_model, &logging, &target, n, seed)?;
            jsonl::write_dataset_path(&output, &dataset)?;
            eprintln!("wrote {} records to {}", dataset.len(), output.display());
            Ok(())
        }
        Command::Bench { config, estimators, jobs, format, output } => {
            let cfg = load_config(&config)?;
            let kinds = parse_estimators(&estimators)?;
            let report = match jobs {
                Some(jobs) => {
                    let pool = rayon::ThreadPoolBuilder::new()
                        .num_threads(jobs)
                        .build()
                        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
                    pool.install(|| run_benchmark(&cfg, &kinds))?
                }
                None => run_benchmark(&cfg, &kinds)?,
            };
            let text = match format {
                Format::Json => {
                    let mut s = report.to_json_pretty();
                    s.push('\n');
                    s
                }
                Format::Csv => report.to_csv(),
            };
            emit(&text, output.as_deref())
        }
        Command::Oracle {
            model_file,
            cardinalities,
            model,
            reward_kind,
            tensor_seed,
            target_slate,
            output,
        } => {
            let reward_model = load_or_sample_model(
                model_file.as_deref(),
                cardinalities.as_deref(),
                model,
                reward_kind,
                tensor_seed,
            )?;
            let schema = reward_model.schema().clone();
            let slate = target_slate.unwrap_or_else(|| vec![0; schema.num_slots()]);
            let logging = FactoredPolicy::uniform(schema.clone());
            let target = FactoredPolicy::deterministic(schema, &slate)?;
            let ground_truth = enumerate_ground_truth(&reward_model, &logging, &target)?;
            let moments = enumerate_moments(&reward_model, &logging, &target)?;
            let variances = variance_report(&moments)?;
            let doc = serde_json::json!({
                "ground_truth": ground_truth,
                "moments": moments,
                "variance_report": variances,
            });
            let mut text =
                serde_json::to_string_pretty(&doc).expect("oracle output serializes");
            text.push('\n');
            emit(&text, output.as_deref())
        }
    }
}

fn parse_estimators(list: &str) -> Result<Vec<EstimatorKind>> {
    let kinds: Vec<EstimatorKind> = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse())
        .collect::<Result<_>>()?;
    if kinds.is_empty() {
        return Err(Error::Config("no estimators requested".into()));
    }
    Ok(kinds)
}

fn load_config(path: &Path) -> Result<SimConfig> {
    let text = fs::read_to_string(path)?;
    let cfg: SimConfig = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}

fn load_or_sample_model(
    model_file: Option<&Path>,
    cardinalities: Option<&[usize]>,
    model: ModelArg,
    reward_kind: RewardKindArg,
    tensor_seed: u64,
) -> Result<RewardModel> {
    match (model_file, cardinalities) {
        (Some(path), _) => {
            let text = fs::read_to_string(path)?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
        }
        (None, Some(dims)) => {
            let schema = SlateSchema::new(dims.to_vec())?;
            match AdditiveForm::from(model) {
                AdditiveForm::FirstSlotGeometric => {
                    RewardModel::sample_skewed(schema, tensor_seed, reward_kind.into())
                }
                AdditiveForm::Sum => RewardModel::sample_additive(
                    schema.clone(),
                    tensor_seed,
                    slate_ope::simulator::PartDistribution::Gaussian {
                        mean: 0.2 / schema.num_slots() as f64,
                        sd: 0.1,
                    },
                    AdditiveForm::Sum,
                    reward_kind.into(),
                ),
            }
        }
        (None, None) => Err(Error::Config(
            "provide either --model-file or --cardinalities".into(),
        )),
    }
}

fn reports_csv(reports: &[EstimateReport]) -> String {
    let mut out = String::from("estimator,n,estimate,plugin_variance,weights,flags\n");
    for r in reports {
        let weights = r
            .weights
            .as_ref()
            .map(|w| {
                w.values()
                    .iter()
                    .map(f64::to_string)
                    .collect::<Vec<_>>()
                    .join(";")
            })
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.estimator.cli_id(),
            r.n,
            r.estimate.map(|e| e.to_string()).unwrap_or_default(),
            r.plugin_variance.map(|v| v.to_string()).unwrap_or_default(),
            weights,
            r.flags.join(";")
        ));
    }
    out
}

fn emit(text: &str, output: Option<&Path>) -> Result<()> {
    print!("{text}");
    if let Some(path) = output {
        fs::write(path, text)?;
    }
    Ok(())
}
