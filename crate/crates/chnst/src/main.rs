use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use chnst::commands::{self, CliError};
use chnst::config::{parse_config, RunConfig};
use chnst::output;
use clap::{Parser, Subcommand};

/// Structure-preserving simulator for the nonisothermal
/// Cahn-Hilliard-Navier-Stokes system on the periodic unit square.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation, writing diagnostics.csv and VTK snapshots.
    Run { config: PathBuf },
    /// Run a mesh-refinement study, writing convergence.csv.
    Converge { config: PathBuf },
    /// Check mass, energy and entropy structure on a short trajectory.
    Check { config: PathBuf },
}

fn load(path: &PathBuf) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    Ok(parse_config(&text)?)
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config } => {
            let cfg = load(&config)?;
            let summary = commands::cmd_run(&cfg)?;
            let last = summary.trajectory.records.last().expect("initial record");
            println!(
                "{} steps to t = {:e}, {} snapshots in {}",
                last.step,
                last.time,
                summary.snapshots,
                cfg.output.display()
            );
        }
        Command::Converge { config } => {
            let cfg = load(&config)?;
            let table = commands::cmd_converge(&cfg)?;
            print!("{}", output::format_convergence(&table));
        }
        Command::Check { config } => {
            let cfg = load(&config)?;
            let report = commands::cmd_check(&cfg)?;
            for line in report.lines() {
                println!("{line}");
            }
            if !report.passed() {
                return Err(CliError::CheckFailed);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
