//! `hsmtl` command-line driver.
//!
//! Exit codes: 0 success, 1 internal failure, 2 usage or input error.

mod commands;
mod config;
mod manifest;
mod sources;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hsmtl::corpus::{CorpusFormat, HierarchyPolicy, SplitStrategy};
use hsmtl::{Task, TaskMask};

/// Bad flags or arguments detected after clap parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser)]
#[command(name = "hsmtl", version, about = "Hierarchical multitask text classification toolkit")]
struct Cli {
    /// Root directory for run outputs when `--out` is not given.
    #[arg(long, global = true, env = "HSMTL_RUN_ROOT", default_value = "runs")]
    run_root: PathBuf,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct CorpusArgs {
    /// Corpus file (TSV with header, or JSONL).
    pub corpus: PathBuf,
    /// Input format; guessed from the extension when omitted.
    #[arg(long, value_parser = parse_format)]
    pub format: Option<CorpusFormat>,
    /// Drop rows that break the label hierarchy instead of rejecting the file.
    #[arg(long)]
    pub drop_invalid: bool,
}

impl CorpusArgs {
    pub fn policy(&self) -> HierarchyPolicy {
        if self.drop_invalid {
            HierarchyPolicy::DropWithWarning
        } else {
            HierarchyPolicy::Reject
        }
    }
}

#[derive(Args, Clone, Default)]
pub struct TrainFlags {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training corpus (overrides `data.train`).
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Dev corpus (overrides `data.dev`).
    #[arg(long)]
    pub dev: Option<PathBuf>,
    /// Embedding sidecar for passthrough mode.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated subtasks to train, e.g. `offd` or `offd,hsc`.
    #[arg(long, value_parser = parse_mask)]
    pub task_mask: Option<TaskMask>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub peak_lr: Option<f64>,
    #[arg(long)]
    pub warmup_steps: Option<u64>,
    #[arg(long)]
    pub finetune_epochs: Option<usize>,
    /// Output directory (default: a config-hash-named directory under the run root).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Class counts and percentages of a labeled corpus.
    Stats {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Write a keyword-driven synthetic corpus as TSV.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Deterministic train/dev/test split.
    Split {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Train, dev and test fractions.
        #[arg(long, default_value = "0.7,0.1,0.2")]
        fractions: String,
        #[arg(long, value_enum, default_value = "stratified")]
        strategy: StrategyArg,
    },
    /// Train one model and keep the best checkpoint per subtask.
    Train(TrainFlags),
    /// Train once per (batch size, peak lr) grid cell.
    Grid(TrainFlags),
    /// Continue training a checkpoint on HSC alone.
    FinetuneHsc {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        flags: TrainFlags,
    },
    /// Probability JSONL for a corpus, from one checkpoint or a ranked grid.
    Predict {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Checkpoint file (writes `--out`).
        #[arg(long, conflicts_with = "grid", required_unless_present = "grid")]
        checkpoint: Option<PathBuf>,
        /// Grid output directory (writes one file per selected run into `--out-dir`).
        #[arg(long)]
        grid: Option<PathBuf>,
        /// Subtask whose checkpoints and ranking are used with `--grid`.
        #[arg(long, default_value = "hsc", value_parser = parse_task)]
        task: Task,
        /// Keep only the k best grid runs for `--task` (default: all).
        #[arg(long)]
        top_k: Option<usize>,
        #[arg(long, required_unless_present = "grid")]
        out: Option<PathBuf>,
        #[arg(long, required_unless_present = "checkpoint")]
        out_dir: Option<PathBuf>,
        /// Embedding sidecar for passthrough checkpoints.
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Probability-product combination of aligned probability files.
    Ensemble {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Self-consistency correction of a probability file.
    Correct {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Metrics against gold labels, optionally compared with other runs.
    Evaluate {
        /// Labeled corpus.
        #[arg(long)]
        gold: PathBuf,
        #[arg(long, value_parser = parse_format)]
        format: Option<CorpusFormat>,
        /// `[NAME=]PATH` or `[NAME=]offd:PATH,hsd:PATH,hsc:PATH`.
        predictions: String,
        /// Further sources for a side-by-side comparison.
        #[arg(long)]
        compare: Vec<String>,
        /// Write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Contradiction rates and FP/FN rates, before and after correction.
    Analyze {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long, value_parser = parse_format)]
        format: Option<CorpusFormat>,
        predictions: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum StrategyArg {
    Stratified,
    Uniform,
}

impl From<StrategyArg> for SplitStrategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Stratified => SplitStrategy::Stratified,
            StrategyArg::Uniform => SplitStrategy::Uniform,
        }
    }
}

fn parse_format(s: &str) -> Result<CorpusFormat, String> {
    s.parse().map_err(|e: hsmtl::Error| e.to_string())
}

fn parse_mask(s: &str) -> Result<TaskMask, String> {
    TaskMask::parse_list(s).map_err(|e| e.to_string())
}

fn parse_task(s: &str) -> Result<Task, String> {
    s.parse().map_err(|e: hsmtl::Error| e.to_string())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<hsmtl::Error>() {
            return if e.is_input_error() { 2 } else { 1 };
        }
        if cause.is::<UsageError>() || cause.is::<std::io::Error>() {
            return 2;
        }
    }
    1
}

fn run(cli: Cli) -> anyhow::Result<()> {
    use commands as c;
    let root = &cli.run_root;
    match cli.command {
        Command::Stats { corpus, json } => c::stats(&corpus, json),
        Command::Synth { out, samples, seed } => c::synth(&out, samples, seed),
        Command::Split {
            corpus,
            out_dir,
            seed,
            fractions,
            strategy,
        } => c::split(&corpus, &out_dir, seed, &fractions, strategy.into()),
        Command::Train(flags) => c::train(&flags, root),
        Command::Grid(flags) => c::grid(&flags, root),
        Command::FinetuneHsc { checkpoint, flags } => c::finetune(&checkpoint, &flags, root),
        Command::Predict {
            corpus,
            checkpoint,
            grid,
            task,
            top_k,
            out,
            out_dir,
            embeddings,
        } => match (checkpoint, grid) {
            (Some(ckpt), None) => c::predict_one(&corpus, &ckpt, out.as_deref(), embeddings.as_deref()),
            (None, Some(grid)) => c::predict_grid(&corpus, &grid, task, top_k, out_dir.as_deref(), embeddings.as_deref()),
            _ => Err(UsageError("give either --checkpoint or --grid".into()).into()),
        },
        Command::Ensemble { inputs, out } => c::ensemble(&inputs, &out),
        Command::Correct { input, out } => c::correct(&input, &out),
        Command::Evaluate {
            gold,
            format,
            predictions,
            compare,
            out,
        } => c::evaluate(&gold, format, &predictions, &compare, out.as_deref()),
        Command::Analyze {
            gold,
            format,
            predictions,
            out,
        } => c::analyze(&gold, format, &predictions, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
