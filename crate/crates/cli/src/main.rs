//! Command-line driver for the temporal-graph transformer: synthetic data
//! generation, training, evaluation, numeric verification, and the delay
//! scoring benchmark, all steered by one JSON config plus flag overrides.
//!
//! Exit codes: 0 on success, 1 on a runtime failure, 2 on a configuration
//! error.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use tgformer::graph::NegativeStrategy;
use tgformer::train::Regime;

#[derive(Parser)]
#[command(
    name = "tgformer",
    version,
    about = "Temporal-graph transformer with auto-correlation attention"
)]
struct Cli {
    /// JSON run configuration; flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory artifacts are written to (default: config value or ".").
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Master seed; overrides every seed in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic periodic graph; writes events.csv and
    /// ground_truth.json.
    Generate,
    /// Train on an event CSV; writes model.ckpt and epochs.jsonl.
    Train {
        /// Event CSV (overrides the config's `data`).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Cap on training epochs.
        #[arg(long)]
        epochs: Option<usize>,
        /// Early-stopping patience in epochs.
        #[arg(long)]
        patience: Option<usize>,
        /// Optimizer step size.
        #[arg(long)]
        learning_rate: Option<f64>,
        /// Events per gradient step.
        #[arg(long)]
        batch_size: Option<usize>,
    },
    /// Rank the test split's events against sampled negatives; writes
    /// eval.json.
    Eval {
        /// Event CSV (overrides the config's `data`).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Checkpoint to score with (default: <out-dir>/model.ckpt).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Negative sampling strategy.
        #[arg(long, value_enum, default_value_t = StrategyArg::All)]
        strategy: StrategyArg,
        /// Which positives count: all of them, or only pairs unseen in
        /// training.
        #[arg(long, value_enum, default_value_t = RegimeArg::Transductive)]
        regime: RegimeArg,
        /// Scoring threads.
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Score with an oracle that knows the true events instead of a
        /// checkpoint (protocol test hook).
        #[arg(long)]
        oracle: bool,
    },
    /// Audit gradients against finite differences and sweep the numeric
    /// invariants; writes grad_check.json.
    GradCheck,
    /// Time FFT versus direct delay scoring across sequence lengths; writes
    /// a CSV.
    BenchAcom {
        /// Comma-separated sequence lengths to measure.
        #[arg(long, default_value = "64,128,256,512,1024,2048,4096")]
        sizes: String,
        /// CSV destination (default: <out-dir>/bench_acom.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StrategyArg {
    Random,
    Historical,
    Inductive,
    All,
}

impl StrategyArg {
    fn expand(self) -> Vec<NegativeStrategy> {
        match self {
            StrategyArg::Random => vec![NegativeStrategy::Random],
            StrategyArg::Historical => vec![NegativeStrategy::Historical],
            StrategyArg::Inductive => vec![NegativeStrategy::Inductive],
            StrategyArg::All => vec![
                NegativeStrategy::Random,
                NegativeStrategy::Historical,
                NegativeStrategy::Inductive,
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RegimeArg {
    Transductive,
    Inductive,
    All,
}

impl RegimeArg {
    fn expand(self) -> Vec<Regime> {
        match self {
            RegimeArg::Transductive => vec![Regime::Transductive],
            RegimeArg::Inductive => vec![Regime::Inductive],
            RegimeArg::All => vec![Regime::Transductive, Regime::Inductive],
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(if err.is_config() { 2 } else { 1 });
    }
}

fn run(cli: Cli) -> tgformer::Result<()> {
    let cfg = config::RunConfig::load(cli.config.as_deref())?;
    let ctx = commands::Context {
        cfg,
        out_dir: cli.out_dir,
        seed: cli.seed,
        quiet: cli.quiet,
    };
    match cli.command {
        Command::Generate => commands::generate(ctx),
        Command::Train { data, epochs, patience, learning_rate, batch_size } => commands::train(
            ctx,
            commands::TrainFlags { data, epochs, patience, learning_rate, batch_size },
        ),
        Command::Eval { data, checkpoint, strategy, regime, workers, oracle } => commands::eval(
            ctx,
            commands::EvalFlags {
                data,
                checkpoint,
                strategies: strategy.expand(),
                regimes: regime.expand(),
                workers,
                oracle,
            },
        ),
        Command::GradCheck => commands::grad_check(ctx),
        Command::BenchAcom { sizes, out } => commands::bench_acom(ctx, &sizes, out),
    }
}
