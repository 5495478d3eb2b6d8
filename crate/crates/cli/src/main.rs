//! `temprel`: batch pipelines for temporal relation inference and TemProb
//! knowledge-base construction.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use temprel_core::pipeline::Mode;

#[derive(Parser, Debug)]
#[command(
    name = "temprel",
    version,
    about = "Temporal relation inference and TemProb knowledge bases"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate a corpus and optionally write it back in canonical form.
    Ingest {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the same-sentence and neighboring-sentence models.
    Train {
        #[arg(long = "in")]
        input: PathBuf,
        /// Output directory for same.model and neighbor.model.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        folds: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Epoch counts tried by cross validation.
        #[arg(long, value_delimiter = ',', default_value = "1,3,5,10")]
        epochs: Vec<usize>,
    },
    /// Label an unlabeled corpus and count the inferred relations.
    BuildKb {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        infer: InferArgs,
    },
    /// Label a corpus with greedy or ILP inference.
    Infer {
        #[arg(long = "in")]
        input: PathBuf,
        /// Labeled corpus: input documents with predicted relations.
        #[arg(long)]
        out: PathBuf,
        /// Per-edge inference report (one JSON record per line).
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        infer: InferArgs,
    },
    /// Score predictions against gold relations.
    Eval {
        #[arg(long)]
        gold: PathBuf,
        /// Labeled corpus to score.
        #[arg(long, required_unless_present = "kb")]
        pred: Option<PathBuf>,
        /// Second system for McNemar's test.
        #[arg(long, requires = "pred")]
        pred_b: Option<PathBuf>,
        /// Score the knowledge-base threshold predictor instead of --pred.
        #[arg(long, conflicts_with = "pred")]
        kb: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
    },
    /// Print ratios, priors and top neighbors for frame pairs.
    Query {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long, num_args = 2, value_names = ["FRAME1", "FRAME2"], action = clap::ArgAction::Append, required = true)]
        pair: Vec<String>,
        #[arg(long, default_value_t = 10)]
        top_k: usize,
    },
    /// List frame pairs with a dominant temporal order.
    Stats {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
        #[arg(long, default_value_t = temprel_core::kb::DEFAULT_MIN_COUNT)]
        min_count: u64,
    },
    /// Bootstrap the label priors of frame pairs over a labeled corpus.
    Bootstrap {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, num_args = 2, value_names = ["FRAME1", "FRAME2"], action = clap::ArgAction::Append, required = true)]
        pair: Vec<String>,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long, default_value_t = 0.5)]
        fraction: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Write a synthetic corpus with the connective rule planted.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        docs: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Leave out gold relations.
        #[arg(long)]
        unlabeled: bool,
    },
}

#[derive(Args, Debug)]
struct InferArgs {
    /// Directory holding same.model and neighbor.model.
    #[arg(long)]
    model: PathBuf,
    /// Knowledge base supplying ILP priors.
    #[arg(long)]
    kb: Option<PathBuf>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long, default_value = "greedy")]
    mode: Mode,
    #[arg(long, default_value_t = temprel_core::inference::DEFAULT_LAMBDA)]
    lambda: f64,
    /// Search nodes per document before the ILP solver gives up on optimality.
    #[arg(long)]
    node_budget: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, env = "TEMPREL_THREADS", default_value_t = 0)]
    threads: usize,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
