use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use meltpinn::cli::{cmd_bench, cmd_eval, cmd_train, BenchArgs, BenchKind, CliError, EvalArgs, TrainArgs};

/// Physics-informed neural-network solver for phase-change
/// thermal-fluid problems.
#[derive(Parser)]
#[command(name = "meltpinn", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a model from a TOML run configuration.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config's output.dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Training seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Allow full-scale laser-case training (hours of compute,
        /// needs labeled 3D data).
        #[arg(long)]
        full_scale: bool,
    },
    /// Evaluate a checkpoint on a space-time grid and emit a field CSV.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Tensor grid, e.g. "t=5:10:11,x=-0.4:0.4:101".
        #[arg(long)]
        grid: String,
        /// Output CSV path (default: <output.dir>/eval.csv).
        #[arg(long)]
        out: Option<PathBuf>,
        /// For laser-case problems: also extract melt-pool dimensions
        /// at this time (s) into a JSON report.
        #[arg(long)]
        melt_pool_at: Option<f64>,
    },
    /// Run a benchmark and emit its figure-ready tables plus a pass/fail
    /// summary: fem-refine | pinn-refine | hard-vs-soft | mms.
    Bench {
        which: String,
        #[arg(long, default_value = "bench_out")]
        out: PathBuf,
        /// Training epochs override for the training-based benchmarks.
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run() -> Result<(), CliError> {
    match Cli::parse().cmd {
        Cmd::Train { config, out, seed, full_scale } => {
            let dir = cmd_train(&TrainArgs { config, out, seed, full_scale })?;
            println!("artifacts written to {}", dir.display());
        }
        Cmd::Eval { checkpoint, config, grid, out, melt_pool_at } => {
            let path = cmd_eval(&EvalArgs { checkpoint, config, grid, out, melt_pool_at })?;
            println!("field table written to {}", path.display());
        }
        Cmd::Bench { which, out, epochs, seed } => {
            let kind: BenchKind = which.parse()?;
            let summary = cmd_bench(&BenchArgs { kind, out, epochs, seed })?;
            for line in summary {
                println!("{line}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
