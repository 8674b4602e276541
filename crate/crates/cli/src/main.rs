//! `deftan` command-line tool.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "deftan", version, about = "Multichannel speech enhancement with DeFT-AN")]
pub struct Cli {
    /// File that receives one JSON line per run. Defaults to `runs.jsonl`
    /// next to the command's main output.
    #[arg(long, global = true)]
    pub run_log: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic corpus of noisy/clean WAV pairs.
    GenData(commands::GenDataArgs),
    /// Train a model with Adam on PCM loss.
    Train(commands::TrainArgs),
    /// Enhance one multichannel WAV file.
    Enhance(commands::EnhanceArgs),
    /// Report SI-SDR and SI-SDR improvement over a manifest.
    Eval(commands::EvalArgs),
    /// Print parameter count and MAC estimates.
    Info(commands::InfoArgs),
    /// Run one parameter-study axis and write a comparison CSV.
    Ablate(commands::AblateArgs),
    /// Check every gradient against finite differences.
    Gradcheck(commands::GradcheckArgs),
}

/// Exit status for each failure class.
pub enum Failure {
    /// A verification ran and did not pass.
    Verification(String),
    Usage(anyhow::Error),
    Io(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<deftan::Error>() {
            Some(inner) if inner.is_usage() => Failure::Usage(e),
            Some(deftan::Error::NonFiniteLoss { .. }) => Failure::Verification(format!("{e:#}")),
            Some(_) => Failure::Io(e),
            None if e.downcast_ref::<std::io::Error>().is_some() => Failure::Io(e),
            None => Failure::Usage(e),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
