//! `kgalign`: dataset statistics, label audits, splits, training, random
//! search, ablations and results tables. Every table is tab-separated text on
//! standard output.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "kgalign",
    version,
    about = "Entity-alignment experiments with validation-only model selection"
)]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

/// Dataset, initialization and split selection.
#[derive(Debug, Args)]
struct DataArgs {
    /// Dataset manifest (TOML).
    #[arg(long)]
    dataset: PathBuf,
    /// Name of the initialization listed in the manifest.
    #[arg(long)]
    init: String,
    #[command(flatten)]
    split: SplitArgs,
}

#[derive(Debug, Args)]
struct SplitArgs {
    /// Seed of the split shuffle.
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
    /// Share of alignments held out for testing (ignored when the manifest
    /// names a test set).
    #[arg(long, default_value_t = kgalign_core::graphstore::DEFAULT_TEST_FRACTION)]
    test_fraction: f64,
    /// Share of the remaining alignments used for training.
    #[arg(long, default_value_t = kgalign_core::graphstore::DEFAULT_TRAIN_FRACTION)]
    train_fraction: f64,
    /// Read the split from a JSON file written by `split --out`.
    #[arg(long)]
    split: Option<PathBuf>,
}

/// Training budget shared by `train` and `search`.
#[derive(Debug, Args)]
struct BudgetArgs {
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    /// Epochs without validation improvement before stopping.
    #[arg(long, default_value_t = 20)]
    patience: usize,
    /// Model seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Entity, relation, triple, aligned and exclusive counts per graph.
    Stats {
        /// Dataset manifests (TOML).
        #[arg(required = true)]
        datasets: Vec<PathBuf>,
    },
    /// How entity labels were obtained: via name attributes or via the URI.
    Audit {
        #[arg(required = true)]
        datasets: Vec<PathBuf>,
    },
    /// Split sizes, optionally saving the split as JSON.
    Split {
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        split: SplitArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Test metrics of the initial features, without training.
    ZeroShot {
        #[command(flatten)]
        data: DataArgs,
        /// Similarity used for ranking.
        #[arg(long, default_value = "cos")]
        similarity: String,
        /// Experiment root to store the result in for `report`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Trains one configuration and prints its validation history.
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// rdgcn, gcn-align or dgmc; ignored when --config is given.
        #[arg(long, default_value = "rdgcn")]
        model: String,
        /// Full training configuration as JSON.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        budget: BudgetArgs,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        similarity: Option<String>,
        /// Where to write the best checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Also report test metrics of this single run.
        #[arg(long)]
        evaluate_test: bool,
    },
    /// Random search; selects on validation H@1 and tests only the winner.
    Search {
        #[command(flatten)]
        data: DataArgs,
        /// rdgcn, gcn-align or dgmc.
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        /// Worker threads (0: one per core).
        #[arg(long, default_value_t = 0)]
        threads: usize,
        #[command(flatten)]
        budget: BudgetArgs,
        /// Experiment root; results go to <out>/<dataset>/<subset>/<init>/<model>.
        #[arg(long)]
        out: PathBuf,
    },
    /// Best validation and test H@1 for each value of one hyperparameter.
    Ablate {
        /// Ledger written by `search`.
        #[arg(long)]
        ledger: PathBuf,
        #[arg(long, required = true)]
        parameter: Vec<String>,
        /// Manifest of the ledger's dataset, used to test per-value winners.
        #[arg(long)]
        dataset: PathBuf,
        /// Split file, when the search used one.
        #[arg(long)]
        split: Option<PathBuf>,
    },
    /// Results table over stored experiments.
    Report {
        /// Experiment roots, searched recursively for results.
        #[arg(required = true)]
        roots: Vec<PathBuf>,
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
    match commands::run(cli.command) {
        Ok(output) => {
            print!("{output}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
