//! Command-line entry point. Exit codes: 0 on success, 1 on configuration
//! or argument validation errors, 2 on runtime failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use harness::commands;
use harness::config::load_config;
use harness::HarnessError;

#[derive(Parser)]
#[command(name = "obtrans", about = "Observation-translation imitation pipeline", version)]
struct Cli {
    /// Path to a key = value configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Override the configured output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate expert demonstrations and save them as a demo file.
    GenDemos,
    /// Train the context-translation model on a demo file.
    TrainTranslator,
    /// Translate one demo into a target context and write image strips.
    Translate,
    /// Train a policy per evaluation context against the derived reward.
    Learn,
    /// Re-evaluate the artifacts of a previous learn run.
    Evaluate,
    /// Run the six-variant ablation sweep.
    Ablate,
}

fn run() -> Result<(), HarnessError> {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let kind = err.kind();
            if kind == ErrorKind::DisplayHelp || kind == ErrorKind::DisplayVersion {
                let _ = err.print();
                return Ok(());
            }
            return Err(HarnessError::Validation(err.to_string()));
        }
    };
    let config_path = cli
        .config
        .ok_or_else(|| HarnessError::Validation("--config PATH is required".into()))?;
    let cfg = load_config(&config_path, cli.seed, cli.out.as_deref())?;
    match cli.command {
        Command::GenDemos => commands::cmd_gen_demos(&cfg),
        Command::TrainTranslator => commands::cmd_train_translator(&cfg),
        Command::Translate => commands::cmd_translate(&cfg),
        Command::Learn => commands::cmd_learn(&cfg),
        Command::Evaluate => commands::cmd_evaluate(&cfg),
        Command::Ablate => commands::cmd_ablate(&cfg),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
