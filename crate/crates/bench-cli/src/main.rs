//! Batch harness for multi-start solver benchmarking: executes seeded
//! runs of both solvers on a shaper instance, persists per-run history
//! files, and computes summary tables and profile figures from them.

mod config;
mod gen;
mod load;
mod profiles_cmd;
mod run;
mod summary;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

/// Command failures carrying their process exit code: 1 for usage or
/// configuration errors, 2 when some runs of a batch failed, 3 for
/// data errors (unreadable instances or histories, mismatched hashes).
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    PartialBatch(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::PartialBatch(_) => 2,
            CliError::Data(_) => 3,
        }
    }
}

#[derive(Parser)]
#[command(name = "bench-cli", about = "Multi-start solver benchmarking harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the configured batch of solver runs, one history file per
    /// run; existing files are skipped so interrupted batches resume.
    Run {
        /// JSON batch configuration file.
        #[arg(long)]
        config: PathBuf,
        /// Override every start-set seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the iteration cap.
        #[arg(long)]
        max_iters: Option<usize>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate a history directory into a cost-statistics table and a
    /// sorted best-value listing (CSV + SVG).
    Summary {
        /// Directory of run-history JSON files.
        dir: PathBuf,
        /// Output directory for tables and figures (default: the
        /// history directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute relative minimization profiles over a history directory,
    /// one panel per budget-scale factor beta.
    Rmp {
        dir: PathBuf,
        /// Per-run base budget in cost units (default: the largest
        /// final cumulative cost found in the histories).
        #[arg(long)]
        budget: Option<f64>,
        /// Comma-separated beta values; `inf` allowed.
        #[arg(long, default_value = "1,6,12,inf")]
        betas: String,
        /// Target mode: best-known, best-known-scaled, median-of-best,
        /// or fixed:<value>.
        #[arg(long, default_value = "best-known")]
        target: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute GL-Profiles (expected best value and feasibility rate as
    /// a fixed total budget is split across more starting points).
    Gl {
        dir: PathBuf,
        /// Comma-separated total budgets in cost units.
        #[arg(long, default_value = "1200,2400,4800,9600")]
        budgets: String,
        /// Comma-separated block sizes (default: powers of two up to
        /// the per-group run count).
        #[arg(long)]
        subset_sizes: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a starting-point set as JSON.
    GenStarts {
        /// randn or lc.
        #[arg(long)]
        kind: String,
        /// Problem dimension.
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the default experimental instance file (n=18 shaper).
    GenInstance {
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            seed,
            max_iters,
            out,
        } => run::cmd_run(&config, seed, max_iters, out),
        Command::Summary { dir, out } => summary::cmd_summary(&dir, out),
        Command::Rmp {
            dir,
            budget,
            betas,
            target,
            out,
        } => profiles_cmd::cmd_rmp(&dir, budget, &betas, &target, out),
        Command::Gl {
            dir,
            budgets,
            subset_sizes,
            out,
        } => profiles_cmd::cmd_gl(&dir, &budgets, subset_sizes.as_deref(), out),
        Command::GenStarts {
            kind,
            dim,
            count,
            seed,
            out,
        } => gen::cmd_gen_starts(&kind, dim, count, seed, &out),
        Command::GenInstance { out } => gen::cmd_gen_instance(&out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
