//! `patchdyn`: seeded batch experiments on the patch model.
//!
//! Exit codes: 0 ok, 1 config error, 2 invariant violation, 3 resource cap.

mod commands;
mod config;
mod error;
mod record;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::GlobalFlags;
use error::CliError;

#[derive(Parser)]
#[command(name = "patchdyn", version, about = "Seeded experiments for the patch contact process")]
struct Cli {
    /// TOML file with top-level globals and one table per command.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    replicas: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override one config value, e.g. `--set capacities=[50,100]`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the patch chain, one record per capacity.
    Simulate,
    /// Integrate the mean-field lattice equation.
    Meanfield,
    /// Exhaustive check of the microscopic duality on small instances.
    DualCheck,
    /// Compare forward occupation with the dual density.
    Agreement,
    /// Single-patch occupation times and collision bounds.
    Isolated,
    /// Oriented site percolation with k-dependent closures.
    Percolation,
    /// Classify a grid of (a, b) with the front detectors.
    PhasePortrait,
    /// Survival against the dispersal range.
    RangeStudy,
    /// Check a record's manifest against the files on disk.
    Verify { record: PathBuf },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let flags = GlobalFlags {
        config: cli.config,
        seed: cli.seed,
        replicas: cli.replicas,
        out: cli.out,
        threads: cli.threads,
        set: cli.set,
    };
    if let Some(n) = flags.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("threads: {e}")))?;
    }
    let done = match cli.command {
        Command::Simulate => commands::simulate(&flags)?,
        Command::Meanfield => commands::meanfield(&flags)?,
        Command::DualCheck => commands::dual_check(&flags)?,
        Command::Agreement => commands::agreement(&flags)?,
        Command::Isolated => commands::isolated(&flags)?,
        Command::Percolation => commands::percolation(&flags)?,
        Command::PhasePortrait => commands::phase(&flags)?,
        Command::RangeStudy => commands::range_study(&flags)?,
        Command::Verify { record } => {
            let bad = record::verify(&record)?;
            if bad.is_empty() {
                println!("{}: manifest ok", record.display());
                return Ok(());
            }
            return Err(CliError::Invariant(format!("hash mismatch: {}", bad.join(", "))));
        }
    };
    // a closed pipe is not worth failing over once the files are written
    let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&done.record.summary).expect("summary serializes"));
    done.failure.map_or(Ok(()), Err)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("patchdyn: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
