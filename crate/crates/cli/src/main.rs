use std::process::ExitCode;

use clap::{Parser, Subcommand};
use diachron::ErrorKind;

mod commands;

#[derive(Parser)]
#[command(name = "diachron", version, about = "Train and compare diachronic word embeddings")]
struct Cli {
    /// More log output (repeat for debug)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a vocabulary from a document manifest
    BuildVocab(commands::BuildVocabArgs),
    /// Tokenize, slice by year and split a manifest into a corpus directory
    Slice(commands::SliceArgs),
    /// Keep a random fraction of the documents of every slice
    Subsample(commands::SubsampleArgs),
    /// Generate a synthetic corpus with planted semantic changes
    Synth(commands::SynthArgs),
    /// Train a model from a run configuration
    Train(commands::TrainArgs),
    /// Held-out L_pos of a finished run
    Eval(commands::EvalArgs),
    /// Per-word drift, histograms, directedness and stability of a run
    Drift(commands::DriftArgs),
    /// Write one slice of a run as a word-vector file
    Export(commands::ExportArgs),
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<diachron::Error>() {
            return match e.kind() {
                ErrorKind::Usage => 1,
                ErrorKind::Data => 2,
                ErrorKind::Numerical => 3,
            };
        }
        if cause.downcast_ref::<commands::UsageError>().is_some() {
            return 1;
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let result = match cli.command {
        Command::BuildVocab(a) => commands::build_vocab(a),
        Command::Slice(a) => commands::slice(a),
        Command::Subsample(a) => commands::subsample(a),
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Drift(a) => commands::drift(a),
        Command::Export(a) => commands::export(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
