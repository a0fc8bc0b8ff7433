mod commands;
mod data;
mod ledger;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

/// Domain-invariant network intrusion detection: train, evaluate and report.
#[derive(Parser)]
#[command(name = "dinids", version, about)]
struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

/// Options shared by commands that read datasets.
#[derive(clap::Args, Clone, Debug, Default)]
pub struct DataArgs {
    /// Config file (`section.key=value` lines).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides every seed (data, dann, osvm).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Stratified subsample size per dataset.
    #[arg(long)]
    pub subsample: Option<usize>,
    /// Schema sidecar; defaults to the bundled NFv2 layout.
    #[arg(long)]
    pub schema: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Direction {
    /// Held-out rows of the training dataset.
    #[value(name = "self")]
    SelfEval,
    /// A different dataset than the one trained on.
    Cross,
}

#[derive(Subcommand)]
enum Command {
    /// Load a flow CSV, print its summary and cache the model features.
    Ingest {
        /// Flow CSV; relative names also resolve against DINIDS_DATA_DIR.
        dataset: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Directory for the summary and feature cache.
        #[arg(long, default_value = "dinids-out/ingest")]
        out: PathBuf,
    },
    /// Train a pipeline from a config and save it as a bundle.
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// Fix the reversal weight instead of scheduling it.
        #[arg(long)]
        lambda_fixed: Option<f64>,
        /// Output directory (default: the config's output.dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a dataset with a saved bundle and append the result to a ledger.
    Eval {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Checked against the bundle's training dataset when given.
        #[arg(long, value_enum)]
        direction: Option<Direction>,
        #[command(flatten)]
        data: DataArgs,
        /// Results ledger (JSON lines); defaults to ledger.jsonl in --out.
        #[arg(long)]
        ledger: Option<PathBuf>,
        #[arg(long, default_value = "dinids-out/eval")]
        out: PathBuf,
    },
    /// Build comparison tables from a results ledger.
    Report {
        #[arg(long)]
        ledger: PathBuf,
        /// Print the published full-scale values beside measured ones.
        #[arg(long)]
        reference: bool,
        #[arg(long, default_value = "dinids-out/report")]
        out: PathBuf,
    },
    /// Export 2-D PCA embeddings of raw and extracted features.
    Embed {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Rows sampled for the embedding.
        #[arg(long, default_value_t = 2000)]
        sample: usize,
        #[arg(long, default_value = "dinids-out/embed")]
        out: PathBuf,
    },
    /// Write a synthetic shifted source/target pair and a matching config.
    Synth {
        #[arg(long, default_value = "dinids-synth")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Rows per domain.
        #[arg(long, default_value_t = 1500)]
        rows: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Ingest { dataset, data, out } => commands::ingest(&dataset, &data, &out),
        Command::Train { data, lambda_fixed, out } => commands::train(&data, lambda_fixed, out.as_deref()),
        Command::Eval {
            bundle,
            dataset,
            direction,
            data,
            ledger,
            out,
        } => commands::eval(&bundle, &dataset, direction, &data, ledger.as_deref(), &out),
        Command::Report { ledger, reference, out } => commands::report(&ledger, reference, &out),
        Command::Embed {
            bundle,
            source,
            target,
            data,
            sample,
            out,
        } => commands::embed(&bundle, &source, &target, &data, sample, &out),
        Command::Synth { out, seed, rows } => commands::synth(&out, seed, rows),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
