//! `fairmtl` command-line runner.

mod commands;
mod failure;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use failure::{CliResult, Failure};

#[derive(Debug, Parser)]
#[command(name = "fairmtl", version, about = "Fairness-aware multitask learning on tabular cohorts")]
struct Cli {
    /// Master seed; every random component derives its stream from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON configuration file for the command.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic biased cohort.
    Synth(SynthArgs),
    /// Encode a raw CSV against its schema and split it.
    Preprocess(PreprocessArgs),
    /// Fit the subgroup model and route every row.
    InferSubgroups(InferArgs),
    /// Train a routed network or a random forest.
    Train(TrainArgs),
    /// Score a model on the test split and audit its fairness.
    Evaluate(EvaluateArgs),
    /// Shapley attributions and Gini importance.
    Explain(ExplainArgs),
    /// Train the full model and its three ablations.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Generator spec JSON; without it a two-subgroup 80/20 cohort is generated.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Row count when no spec is given.
    #[arg(long, default_value_t = 4000)]
    rows: usize,
}

#[derive(Debug, Args)]
struct PreprocessArgs {
    /// Raw cohort CSV.
    #[arg(long)]
    input: PathBuf,
    /// Column schema JSON.
    #[arg(long)]
    schema: PathBuf,
    /// Train, validation and test fractions.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.70, 0.15, 0.15])]
    split: Vec<f64>,
}

#[derive(Debug, Args)]
struct SubgroupArgs {
    /// Number of latent subgroups.
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Saved subgroup model to reuse instead of fitting one.
    #[arg(long)]
    subgroups: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InferArgs {
    #[arg(long)]
    cohort: PathBuf,
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Autoencoder bottleneck width.
    #[arg(long)]
    bottleneck: Option<usize>,
    /// Autoencoder epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Fit on every row rather than the train split.
    #[arg(long)]
    all_rows: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelKind {
    Fairmtl,
    Forest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Preset {
    /// Full-width encoder and the default learning rate.
    Full,
    /// Small encoder for cohorts of a few thousand rows.
    Desk,
}

#[derive(Debug, Args)]
struct NetworkArgs {
    /// Base hyperparameters when no --config is given.
    #[arg(long, value_enum, default_value_t = Preset::Full)]
    preset: Preset,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    cohort: PathBuf,
    #[arg(long, value_enum, default_value_t = ModelKind::Fairmtl)]
    model: ModelKind,
    /// Train one ablation variant instead of the full model.
    #[arg(long)]
    ablation: Option<String>,
    #[command(flatten)]
    subgroups: SubgroupArgs,
    #[command(flatten)]
    network: NetworkArgs,
    /// Forest size.
    #[arg(long)]
    trees: Option<usize>,
    /// Forest depth limit.
    #[arg(long)]
    max_depth: Option<usize>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Network checkpoint or forest file.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    cohort: PathBuf,
    /// Bootstrap resamples for intervals; 0 omits them.
    #[arg(long, default_value_t = 1000)]
    bootstrap: usize,
    /// Second model to test the disparity difference against.
    #[arg(long)]
    compare: Option<PathBuf>,
    /// Sensitive attributes to audit; all by default.
    #[arg(long, value_delimiter = ',')]
    attributes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Exact,
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Global {
    Gini,
}

#[derive(Debug, Args)]
struct ExplainArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    cohort: PathBuf,
    /// Cohort row indices to explain.
    #[arg(long, value_delimiter = ',')]
    instances: Vec<usize>,
    #[arg(long, value_enum, default_value_t = Method::Exact)]
    method: Method,
    /// Permutations for the sampled method.
    #[arg(long, default_value_t = 2000)]
    samples: usize,
    /// Class to explain; the predicted class of each instance by default.
    #[arg(long)]
    class: Option<usize>,
    /// Background rows drawn from the train split.
    #[arg(long, default_value_t = fairmtl::explain::DEFAULT_BACKGROUND)]
    background: usize,
    /// Global importance to report.
    #[arg(long, value_enum)]
    global: Option<Global>,
    /// Features kept in ranked reports.
    #[arg(long, default_value_t = 20)]
    top: usize,
}

#[derive(Debug, Args)]
struct AblateArgs {
    #[arg(long)]
    cohort: PathBuf,
    #[command(flatten)]
    subgroups: SubgroupArgs,
    #[command(flatten)]
    network: NetworkArgs,
    /// Bootstrap resamples for the EO tests against the full model; 0 skips them.
    #[arg(long, default_value_t = 0)]
    bootstrap: usize,
}

fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var("FAIRMTL_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::input(format!("FAIRMTL_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::input(e.to_string()))
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    std::fs::create_dir_all(&cli.out).map_err(|e| Failure::input(format!("{}: {e}", cli.out.display())))?;
    let global = commands::Global {
        seed: cli.seed,
        config: cli.config,
        out: cli.out,
    };
    match cli.command {
        Command::Synth(a) => commands::synth(&global, a),
        Command::Preprocess(a) => commands::preprocess(&global, a),
        Command::InferSubgroups(a) => commands::infer_subgroups(&global, a),
        Command::Train(a) => commands::train(&global, a),
        Command::Evaluate(a) => commands::evaluate(&global, a),
        Command::Explain(a) => commands::explain(&global, a),
        Command::Ablate(a) => commands::ablate(&global, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.code)
        }
    }
}
