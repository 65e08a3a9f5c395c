use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cpslab_cli::{execute, Stage};

/// Consistent price systems and superreplication bounds under proportional
/// transaction costs.
#[derive(Parser)]
#[command(name = "cpslab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Overrides the config's output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Sample price paths.
    Simulate,
    /// Extract stopping-time ladders from saved paths.
    Ladder,
    /// Build consistent price systems from saved paths and ladders.
    Cps,
    /// Upper/lower superreplication bounds for the configured payoff.
    Facelift,
    /// Conditional-full-support evidence.
    Audit,
    /// Every configured stage.
    Run,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(config) = cli.config else {
        eprintln!("error: --config <file> is required");
        return ExitCode::from(1);
    };
    let stage = match cli.command {
        Command::Simulate => Some(Stage::Simulate),
        Command::Ladder => Some(Stage::Ladder),
        Command::Cps => Some(Stage::Cps),
        Command::Facelift => Some(Stage::Facelift),
        Command::Audit => Some(Stage::Audit),
        Command::Run => None,
    };
    match execute(&config, stage, cli.seed, cli.workers, cli.out.as_deref()) {
        Ok(m) => {
            println!("wrote {} artifacts (config sha256 {})", m.artifacts.len(), m.config_sha256);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
