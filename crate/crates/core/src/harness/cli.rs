use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::Result;

use super::run::{
    compare, format_comparison, format_sqrt_bench, load_config, run_experiment, sqrt_bench,
    RunOptions,
};

#[derive(Debug, Parser)]
#[command(
    name = "sngd",
    version,
    about = "Train and compare optimizers with Fisher-reconstructed layers"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one experiment and write its metrics CSV.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Write 0 for epoch wall time so repeated runs are byte-identical.
        #[arg(long)]
        no_timing: bool,
        /// Overrides the config's output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run several experiments in turn and print a summary table.
    Compare {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        /// Write every run's rows into one CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time the matrix square-root solvers on a random SPD matrix.
    SqrtBench {
        #[arg(long)]
        order: usize,
        #[arg(long)]
        cond: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Executes a parsed command, writing reports to `out`.
pub fn execute(cli: Cli, out: &mut impl Write) -> Result<()> {
    match cli.command {
        Command::Train {
            config,
            no_timing,
            out: csv,
        } => {
            let cfg = load_config(&config)?;
            let path = csv.clone().unwrap_or_else(|| cfg.output.clone());
            let summary = run_experiment(
                &cfg,
                &RunOptions {
                    timing: !no_timing,
                    output: csv,
                },
            )?;
            writeln!(
                out,
                "{}: final train loss {:.6}, test accuracy {}, metrics in {}",
                summary.run_id,
                summary.final_train_loss(),
                summary
                    .final_test_accuracy()
                    .map_or("-".to_string(), |a| format!("{a:.4}")),
                path.display()
            )?;
        }
        Command::Compare { configs, out: csv } => {
            let summaries = compare(&configs, csv.as_deref())?;
            write!(out, "{}", format_comparison(&summaries))?;
        }
        Command::SqrtBench { order, cond, seed } => {
            write!(
                out,
                "{}",
                format_sqrt_bench(&sqrt_bench(order, cond, seed)?)
            )?;
        }
    }
    Ok(())
}
