//! `dsvr`: command-line front end for the toolkit.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use commands::*;

#[derive(Debug, Parser)]
#[command(name = "dsvr", version, about = "Discrete speech units for Arabic dialect vowelization recovery")]
struct Cli {
    /// TOML file supplying default values for any flag; top-level keys apply
    /// to every command that has the flag, a [command-name] table to one
    /// command. Flags given on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<std::path::PathBuf>,

    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a k-means codebook on a label-balanced frame sample.
    TrainCodebook(TrainCodebookArgs),
    /// Map every frame of a manifest to its nearest code.
    Quantize(QuantizeArgs),
    /// Report DB index, purities and PNMI of a codebook against frame labels.
    EvalCodebook(EvalCodebookArgs),
    /// Normalise raw transcripts to verbatim form.
    Normalize(NormalizeArgs),
    /// Train a recognizer with CTC.
    TrainDvr(TrainDvrArgs),
    /// Transcribe a manifest with a trained recognizer.
    Decode(DecodeArgs),
    /// Character error rate of hypotheses against references.
    Score(ScoreArgs),
    /// Write a synthetic corpus drawn from known Gaussians.
    GenFixture(GenFixtureArgs),
}

fn run() -> Result<(), CliError> {
    let raw: Vec<std::ffi::OsString> = std::env::args_os().collect();
    let args = config::merge_config(raw, &Cli::command())?;
    let matches = Cli::command().try_get_matches_from(args).map_err(CliError::Clap)?;
    let cli = Cli::from_arg_matches(&matches).map_err(CliError::Clap)?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(dsvr::Error::Validation("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| dsvr::Error::Validation(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::TrainCodebook(a) => train_codebook(a),
        Command::Quantize(a) => quantize(a),
        Command::EvalCodebook(a) => eval_codebook(a),
        Command::Normalize(a) => normalize(a),
        Command::TrainDvr(a) => train_dvr(a),
        Command::Decode(a) => decode(a),
        Command::Score(a) => score(a),
        Command::GenFixture(a) => gen_fixture(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Clap(e)) => {
            let code = e.exit_code();
            let _ = e.print();
            ExitCode::from(code as u8)
        }
        Err(CliError::Dsvr(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.kind().exit_code() as u8)
        }
    }
}
