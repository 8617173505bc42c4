use std::path::PathBuf;
use std::process::ExitCode;

use batwing_cli::{exit_code, run_command, Command, RunManifest};
use clap::Parser;

/// Bat-wing flapping robot simulator.
#[derive(Debug, Parser)]
#[command(name = "batwing", version)]
struct Args {
    /// What to run.
    #[arg(value_enum)]
    command: Command,
    /// TOML configuration; defaults are used for absent keys or without a file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "batwing-out")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Override a configuration key, e.g. `--set sim.duration_s=2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let manifest = RunManifest {
        config: args.config,
        command: args.command,
        out_dir: args.out,
        seed: args.seed,
        overrides: args.overrides,
    };
    let code = run_command(&manifest).unwrap_or_else(|e| {
        eprintln!("error: {e}");
        exit_code(&e)
    });
    ExitCode::from(code as u8)
}
