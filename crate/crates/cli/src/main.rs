//! Command line frontend for the document layout pipeline: generate or
//! import corpora, sample candidate graphs, train, evaluate, and run models.

mod cmd;
mod config;
mod svg;

use std::fmt;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use layoutgraph::io::IoError;

/// Failures grouped by exit code: configuration problems exit 2, data
/// problems exit 3, numeric problems exit 4.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration: {m}"),
            CliError::Data(m) => write!(f, "data: {m}"),
            CliError::Numeric(m) => write!(f, "numerics: {m}"),
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> CliError {
        match &e {
            IoError::SynthConfig(_) | IoError::ConfigMismatch(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "layoutgraph",
    version,
    about = "Document layout analysis over OCR text boxes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic corpus of page documents.
    Synth(cmd::SynthArgs),
    /// Build the geometric candidate graph for one page.
    Sample(cmd::SampleArgs),
    /// Train a model on a directory of labeled pages.
    Train(cmd::TrainArgs),
    /// Score a trained model on a directory of labeled pages.
    Eval(cmd::EvalArgs),
    /// Run a trained model on one page and decode labeled instances.
    Infer(cmd::InferArgs),
    /// Convert a FUNSD-style annotation directory into page documents.
    Import(cmd::ImportArgs),
    /// Compare analytic gradients against central finite differences.
    Gradcheck(cmd::GradcheckArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(args) => cmd::synth(args),
        Command::Sample(args) => cmd::sample(args),
        Command::Train(args) => cmd::train_cmd(args),
        Command::Eval(args) => cmd::eval(args),
        Command::Infer(args) => cmd::infer(args),
        Command::Import(args) => cmd::import(args),
        Command::Gradcheck(args) => cmd::gradcheck(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
