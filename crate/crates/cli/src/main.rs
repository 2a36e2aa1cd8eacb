mod commands;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Options;

/// Evaluate and verify implicit solutions of u_a u_a = F(u_t), and check
/// the symmetry classification table.
#[derive(Debug, Parser)]
#[command(name = "eikon", version)]
struct Cli {
    /// Scenario file (JSON).
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,

    /// Output CSV path; defaults to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Overrides the scenario's rng_seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads, 0 for one per core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate the solution on the grid and verify every root.
    Evaluate,
    /// Check every generator of a table row on sampled jets.
    VerifyTable,
    /// Transform the solution by a finite symmetry and verify the result.
    Flow {
        /// Generator id from the scenario's table row, e.g. D or G_5.
        #[arg(long)]
        generator: String,
        #[arg(long, allow_negative_numbers = true)]
        eps: f64,
    },
    /// Numerical rank of the space Hessian on the grid.
    Rank,
}

fn run(cli: &Cli) -> anyhow::Result<i32> {
    let path = cli.scenario.as_deref().ok_or_else(|| anyhow::anyhow!("--scenario is required"))?;
    let scenario = scenario::load(path)?;
    let opts = Options { out: cli.out.as_deref(), seed: cli.seed, threads: cli.threads };
    match &cli.command {
        Command::Evaluate => commands::evaluate(&scenario, &opts),
        Command::VerifyTable => commands::verify_table(&scenario, &opts),
        Command::Flow { generator, eps } => commands::flow(&scenario, generator, *eps, &opts),
        Command::Rank => commands::rank(&scenario, &opts),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
