use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;
use starkscatter_cli::{report, Failure};

#[derive(Parser)]
#[command(
    name = "starkscatter",
    version,
    about = "Scattering experiments for time-periodic potentials in an electric field"
)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Run the experiment described by a TOML config.
    Run { config: PathBuf },
    /// Summarise a finished output directory.
    Report { dir: PathBuf },
    /// Check a config without computing anything.
    Validate { config: PathBuf },
}

fn fail(e: Failure) -> ExitCode {
    eprintln!("{}", e.record());
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.verb {
        Verb::Run { config } => match starkscatter_cli::run(&config) {
            Ok(out) => {
                println!("{}", json!({"status": "ok", "output_dir": out}));
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Verb::Report { dir } => match report::report(&dir) {
            Ok(text) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            Err(e) => fail(e.into()),
        },
        Verb::Validate { config } => match starkscatter_cli::validate(&config) {
            Ok(cfg) => {
                println!(
                    "{}",
                    json!({"status": "ok", "scenario": cfg.scenario.name()})
                );
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
    }
}
