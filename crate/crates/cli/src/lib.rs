//! Command-line front end: data generation, label corruption, training
//! runs, parameter sweeps and statistical comparison.

pub mod commands;
pub mod compare;
pub mod config;
pub mod corrupt;
pub mod error;
pub mod pipeline;
pub mod run;
pub mod scheduler;

use std::ffi::OsString;

use clap::{Parser, Subcommand};

use commands::{CompareArgs, CorruptArgs, EvalArgs, GenDataArgs, TrainArgs};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "srea", version, about = "Time series classification under label noise")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one configuration for each seed.
    Train(TrainArgs),
    /// Train over a grid of noise types, ratios and seeds.
    Bench(TrainArgs),
    /// Corrupt the labels of a text file and write an oracle.
    Corrupt(CorruptArgs),
    /// Evaluate a saved model on a test file.
    Eval(EvalArgs),
    /// Compare finished runs with rank tests.
    Compare(CompareArgs),
    /// Write a synthetic dataset.
    GenData(GenDataArgs),
}

pub fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Train(a) => commands::train(a),
        Command::Bench(a) => commands::bench(a),
        Command::Corrupt(a) => commands::corrupt(a),
        Command::Eval(a) => commands::eval(a),
        Command::Compare(a) => commands::compare_cmd(a),
        Command::GenData(a) => commands::gen_data(a),
    }
}

/// Parses `args`, runs the command and returns the process exit code:
/// 0 on success, 2 for usage or configuration errors, 1 otherwise.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).try_init();
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
