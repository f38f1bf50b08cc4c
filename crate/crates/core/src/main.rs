use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use eeg_fewshot::cli;
use eeg_fewshot::io::RunConfig;

/// Few-shot EEG drowsiness estimation: synthetic data, training, episodic
/// cross-subject evaluation, vigilance regression, and ablations.
#[derive(Parser)]
#[command(name = "eeg-fewshot", version, about)]
struct Args {
    /// Flat key=value configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic benchmark dataset and its manifest.
    Synth,
    /// Dump the differential-entropy feature matrix of one epoch as CSV.
    Features {
        /// Epoch file (.eege binary or .csv ingestion format).
        #[arg(long)]
        input: PathBuf,
        /// Sample rate in Hz, required for CSV inputs.
        #[arg(long)]
        sample_rate: Option<f64>,
    },
    /// Pretrain the feature extraction block on the labeled training pool.
    Pretrain,
    /// Episodic training of the full model.
    Train {
        /// Checkpoint whose feature block initializes the model.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Cross-subject evaluation of a checkpoint over the configured shots.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Per-subject k-fold vigilance regression.
    Vigilance,
    /// Distance-metric, determination-block, and similarity-block ablations.
    Ablate,
}

fn main() -> Result<()> {
    let args = Args::parse();
    let mut config = match &args.config {
        Some(path) => RunConfig::parse_file(path)
            .with_context(|| format!("loading config {}", path.display()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = args.out {
        config.out_dir = out.to_string_lossy().into_owned();
    }

    match args.command {
        Command::Synth => cli::cmd_synth(&config),
        Command::Features { input, sample_rate } => {
            cli::cmd_features(&config, &input, sample_rate)
        }
        Command::Pretrain => cli::cmd_pretrain(&config),
        Command::Train { init } => cli::cmd_train(&config, init.as_deref()),
        Command::Eval { checkpoint } => cli::cmd_eval(&config, &checkpoint),
        Command::Vigilance => cli::cmd_vigilance(&config),
        Command::Ablate => cli::cmd_ablate(&config),
    }
}
