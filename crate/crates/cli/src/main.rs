use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

/// Weak-moment transversality and degeneracy analyses driven by JSON scenarios.
#[derive(Parser, Debug)]
#[command(name = "weaktrans", version)]
struct Cli {
    /// One of: features, jacobian, transversality, classify, sweep, stein, behrens-fisher.
    command: String,
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory; created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Recorded in the report; the analyses are deterministic.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match weaktrans::run(&cli.command, &cli.scenario, &cli.out, cli.seed) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
