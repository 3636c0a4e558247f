use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::thread;

use anyhow::{bail, Context, Result};
use clap::Args;
use mrlpos_core::export::write_outputs;
use mrlpos_core::{run_simulation, AgentKind, SimulationConfig, SimulationResult};

use crate::EXIT_NETWORK_DEATH;

#[derive(Args)]
pub struct RunArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the scenario's seed.
    #[arg(long, conflicts_with = "seeds")]
    pub seed: Option<u64>,
    /// Runs one engine per seed in parallel, each into `<out>/seed-<n>`.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub seeds: Option<Vec<u64>>,
    /// Overrides the scenario's round count.
    #[arg(long)]
    pub rounds: Option<u64>,
    #[arg(long, env = "MRLPOS_OUT", default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub quiet: bool,
}

pub fn load_config(args: &RunArgs) -> Result<SimulationConfig> {
    let text = fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let mut config = SimulationConfig::parse_toml(&text)
        .with_context(|| format!("in {}", args.config.display()))?;
    if let Some(seed) = args.seed {
        config.seed.0 = seed;
    }
    if let Some(rounds) = args.rounds {
        config.rounds = rounds;
    }
    config.validate()?;
    Ok(config)
}

pub fn run(args: &RunArgs) -> Result<ExitCode> {
    let config = load_config(args)?;
    let jobs: Vec<(SimulationConfig, PathBuf)> = match &args.seeds {
        None => vec![(config, args.out.clone())],
        Some(seeds) => {
            if seeds.is_empty() {
                bail!("--seeds needs at least one seed");
            }
            seeds
                .iter()
                .map(|&s| {
                    let mut c = config.clone();
                    c.seed.0 = s;
                    (c, args.out.join(format!("seed-{s}")))
                })
                .collect()
        }
    };

    let results: Vec<Result<SimulationResult>> = thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|(c, _)| {
                scope.spawn(move || run_simulation(c.clone()).map_err(anyhow::Error::from))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    });

    let mut died = false;
    for ((_, dir), result) in jobs.iter().zip(results) {
        let result = result?;
        write_outputs(&result, dir).with_context(|| format!("writing {}", dir.display()))?;
        if !args.quiet {
            print_summary(&result, dir);
        }
        died |= result.network_died();
    }
    Ok(if died {
        ExitCode::from(EXIT_NETWORK_DEATH)
    } else {
        ExitCode::SUCCESS
    })
}

fn print_summary(result: &SimulationResult, dir: &Path) {
    let s = &result.summary;
    println!(
        "seed {}: {} rounds, {} blocks committed, {} rejected -> {}",
        s.seed,
        s.rounds_run,
        s.committed_blocks,
        s.rejected_blocks,
        dir.display()
    );
    for kind in AgentKind::ALL {
        if let Some(m) = s.mean_cumulative(kind) {
            println!("  mean cumulative {:<11} {m:>10.2}", kind.as_str());
        }
    }
    if let Some(r) = s.network_death {
        println!("  network died in round {r}: no active agents left");
    }
}

/// The canonical scenario with every default spelled out.
pub fn defaults_document() -> String {
    let mut doc = String::from("# mrlpos scenario: canonical population, all defaults explicit\n");
    doc.push_str(&SimulationConfig::canonical(42).resolved().to_toml_string());
    doc
}
