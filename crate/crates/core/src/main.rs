use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use invmetric::cli::{run, Command, ExperimentConfig};

/// Invariant metrics on planar domains: config-driven experiments.
#[derive(Parser)]
#[command(version)]
struct Args {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Command to run; the config's `commands` list when omitted.
    #[arg(long)]
    command: Option<String>,
    /// Output directory; the config's `output_dir` when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for sampled checks.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let config = match ExperimentConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let commands = match args
        .command
        .as_deref()
        .map(str::parse::<Command>)
        .transpose()
    {
        Ok(c) => c.into_iter().collect::<Vec<_>>(),
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match run(&config, &commands, args.out.as_deref(), args.seed) {
        Ok(outcome) => {
            for c in &outcome.commands {
                let status = if c.failures.is_empty() {
                    "ok".to_string()
                } else {
                    format!("FAILED: {}", c.failures.join(", "))
                };
                println!("{} [{:.2}s] {status}", c.command.name(), c.seconds);
            }
            if let Some(e) = &outcome.error {
                eprintln!("error: {e}");
            }
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
