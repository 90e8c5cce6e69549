mod commands;
mod config;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pop_core::ErrorKind;

use crate::commands::{
    clean::CleanArgs, evaluate::EvaluateArgs, forecast::ForecastArgs, mine::MineArgs, signal::SignalArgs,
    styles::StylesArgs, synthetic::SyntheticArgs,
};

/// Mine POP exogenous series for new products and evaluate them.
#[derive(Debug, Parser)]
#[command(name = "pop", version)]
pub struct Cli {
    /// TOML run configuration. Command-line flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Seed for every random stage.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Maximum number of worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Root of all written outputs.
    #[arg(long, global = true, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,

    /// Generate embeddings instead of loading them: `seed,d,centroid-sep,noise-sigma`.
    #[arg(long, global = true, value_name = "SPEC")]
    pub synth_embeddings: Option<String>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Expand every probe into queries and fetch the image records.
    Mine(MineArgs),
    /// Train the head, run confident learning and retrain on the kept samples.
    Clean(CleanArgs),
    /// Form the POP series of every probe.
    Signal(SignalArgs),
    /// Forecast one series.
    Forecast(ForecastArgs),
    /// Score forecasts against ground truth.
    Evaluate(EvaluateArgs),
    /// Extract styles by NMF and build their POP series.
    Styles(StylesArgs),
    /// Run the seeded synthetic experiment.
    Synthetic(SyntheticArgs),
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let kind = err
        .chain()
        .find_map(|e| e.downcast_ref::<pop_core::Error>())
        .map(pop_core::Error::kind);
    match kind {
        Some(ErrorKind::Validation) => 2,
        Some(ErrorKind::MissingData) => 3,
        Some(ErrorKind::Numeric) => 4,
        // Anything the core did not classify is a malformed input or flag.
        None => 2,
    }
}

/// The error chain on one line, skipping causes already quoted by their parent.
fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    let mut last = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if !last.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
        last = msg;
    }
    out
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", describe(&err));
            ExitCode::from(exit_code(&err))
        }
    }
}
