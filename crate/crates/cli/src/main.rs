//! `sagcn`: synthetic cohorts, pooling, nested-CV training and exports.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "sagcn", version, about = "Graph pooling + population-graph GCN pipeline for ROI time series")]
struct Cli {
    /// Log verbosity (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "info")]
    log_level: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic cohort (time series, phenotypes, manifest).
    Synth(SynthArgs),
    /// Pool every subject's brain graph and store sparse feature files.
    Pool(PoolArgs),
    /// Run nested cross-validation on pooled features.
    Train(TrainArgs),
    /// Recompute metrics from the held-out predictions of a training run.
    Evaluate(EvaluateArgs),
    /// Per-group node and edge selection frequencies.
    Frequencies(FrequenciesArgs),
    /// Write MLP embeddings joined with phenotypes.
    EmbedExport(EmbedExportArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of subjects (at least 4).
    #[arg(long, default_value_t = 200)]
    pub subjects: usize,
    /// Time points per series.
    #[arg(long, default_value_t = 64)]
    pub timepoints: usize,
    /// Class separation of the signature ROIs (0 gives identical classes).
    #[arg(long, default_value_t = 3.0)]
    pub gap: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Allow writing into a non-empty directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug)]
pub struct PoolArgs {
    /// TOML run configuration; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Cohort manifest JSON.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Output directory for feature files and the pooling summary
    /// (defaults to `pooled` from the config).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fraction of nodes kept per layer, in (0, 1].
    #[arg(long)]
    pub ratio: Option<f64>,
    /// Number of pooling layers.
    #[arg(long)]
    pub layers: Option<usize>,
    /// Also write a CSV view of every feature file.
    #[arg(long)]
    pub csv: bool,
    /// Worker threads.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Directory written by `pool`.
    #[arg(long)]
    pub pooled: Option<PathBuf>,
    /// Run directory for metrics, predictions and checkpoints.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Heads to evaluate, comma separated: mlp, lr, gcn.
    #[arg(long, value_delimiter = ',')]
    pub head: Option<Vec<String>>,
    /// GCN cluster count.
    #[arg(long, conflicts_with = "full_batch")]
    pub clusters: Option<usize>,
    /// Train the GCN on the whole population graph each step.
    #[arg(long)]
    pub full_batch: bool,
    /// Seed of the fold plan; model seeds derive from it.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub outer_k: Option<usize>,
    #[arg(long)]
    pub outer_repeats: Option<usize>,
    #[arg(long)]
    pub inner_k: Option<usize>,
    #[arg(long)]
    pub inner_repeats: Option<usize>,
    /// MLP learning rate.
    #[arg(long)]
    pub mlp_lr: Option<f64>,
    #[arg(long)]
    pub mlp_epochs: Option<usize>,
    /// GCN learning rate.
    #[arg(long)]
    pub gcn_lr: Option<f64>,
    #[arg(long)]
    pub gcn_epochs: Option<usize>,
    /// Weight decay for both networks.
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Dropout for both networks.
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Which folds get checkpoints: none, first or all.
    #[arg(long, default_value = "first")]
    pub checkpoints: commands::CheckpointPolicy,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Run directory written by `train`.
    #[arg(long)]
    pub run: PathBuf,
    /// Metrics JSON to write (default: <run>/evaluation.json).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FrequenciesArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory written by `pool`.
    #[arg(long)]
    pub pooled: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Grouping keys, comma separated: dx, gender, site.
    #[arg(long, default_value = "dx")]
    pub group: String,
    /// Rows kept per table.
    #[arg(long, default_value_t = 15)]
    pub top: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug)]
pub struct EmbedExportArgs {
    /// Run directory written by `train`.
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub pooled: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Outer repeat of the checkpoint to use.
    #[arg(long, default_value_t = 0)]
    pub repeat: usize,
    /// Outer fold of the checkpoint to use.
    #[arg(long, default_value_t = 0)]
    pub fold: usize,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .format_timestamp(None)
        .init();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Pool(a) => commands::pool(a),
        Command::Train(a) => commands::train(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Frequencies(a) => commands::frequencies(a),
        Command::EmbedExport(a) => commands::embed_export(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
