use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Parser, Debug)]
#[command(name = "mag", version, about = "Next-scale autoregressive graph generation")]
pub struct Cli {
    /// TOML run configuration; defaults apply to every missing key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file, or the run directory for `train`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DatasetName {
    CommunitySmall,
    FromFile,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Stage {
    Tokenizer,
    Transformer,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a dataset as JSON Lines.
    Dataset {
        #[arg(value_enum)]
        name: DatasetName,
        /// Source for `from-file`; overrides `dataset.path`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Train one stage and write its checkpoint and metrics log.
    Train {
        #[arg(value_enum)]
        stage: Stage,
        /// Training data; defaults to `train.jsonl` in the data directory.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Continue from the stage's checkpoint up to the configured epoch count.
        #[arg(long)]
        resume: bool,
    },
    /// Sample graphs from trained checkpoints.
    Generate {
        #[arg(long, default_value_t = 50)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        class: usize,
        /// Fixed node count; by default sizes follow the training set.
        #[arg(long)]
        nodes: Option<usize>,
    },
    /// Compare generated graphs with a reference set.
    Evaluate {
        generated: PathBuf,
        reference: PathBuf,
        /// Per-graph statistics as CSV.
        #[arg(long)]
        stats_csv: Option<PathBuf>,
    },
    /// Attention pair counts for node-wise and scale-wise generation.
    Bench {
        #[arg(long, default_value_t = 256)]
        max_n: usize,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &mag::Error) -> u8 {
    match e {
        mag::Error::NonFinite(_) | mag::Error::NonDeterministic { .. } => 3,
        _ => 2,
    }
}
