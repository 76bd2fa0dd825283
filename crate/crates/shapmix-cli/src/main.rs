//! `shapmix` — experiment runner for saliency-guided skeleton mixing.
//!
//! Subcommands: `gen-data` (synthetic datasets, optionally long-tailed),
//! `train` (full training run with serialized artifacts), and `eval`
//! (standalone checkpoint evaluation).
//!
//! Exit codes: `0` success, `2` usage or configuration error, `3` data
//! error (missing/corrupt files, shape mismatches), `4` numeric failure
//! (non-finite values detected).

mod artifacts;
mod eval_cmd;
mod gen_data;
mod train_cmd;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "shapmix", version, about = "Saliency-guided skeleton mixing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic skeleton dataset (train + test splits).
    GenData(gen_data::GenDataArgs),
    /// Train a model and write checkpoint, report, and saliency artifacts.
    Train(train_cmd::TrainArgs),
    /// Evaluate a checkpoint on a dataset.
    Eval(eval_cmd::EvalArgs),
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(args) => gen_data::run(args),
        Command::Train(args) => train_cmd::run(args),
        Command::Eval(args) => eval_cmd::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// Map an error chain to the documented exit codes. The first library
/// error in the chain decides; anything else counts as a data error.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<shapmix::Error>() {
            return match e {
                shapmix::Error::Config(_) => 2,
                shapmix::Error::NonFinite(_) => 4,
                _ => 3,
            };
        }
    }
    3
}
