//! `mrlpos`: run scenarios and inspect their per-round reports.

mod explain;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Exit status for configuration, usage and IO failures.
pub const EXIT_CONFIG: u8 = 2;
/// Exit status when every agent was eliminated before the last round.
pub const EXIT_NETWORK_DEATH: u8 = 3;

#[derive(Parser)]
#[command(
    name = "mrlpos",
    version,
    about = "Reputation-driven proof-of-stake simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write rounds.csv, summary.txt and chain.dump.
    Run(run::RunArgs),
    /// Print one agent's trajectory from a rounds.csv report.
    Explain {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        agent: u32,
    },
    /// Print a scenario file with every default written out.
    Defaults,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run::run(&args),
        Command::Explain { report, agent } => {
            explain::explain(&report, agent).map(|()| ExitCode::SUCCESS)
        }
        Command::Defaults => {
            print!("{}", run::defaults_document());
            Ok(ExitCode::SUCCESS)
        }
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}
