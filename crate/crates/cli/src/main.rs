mod args;
mod commands;
mod manifest;

use std::process::ExitCode;

use clap::Parser;
use frosketch::Error;

use args::{Cli, Command};

fn exit_code(e: &Error) -> u8 {
    if e.is_argument_error() {
        return 2;
    }
    match e {
        Error::Io(_) | Error::Format { .. } | Error::Json(_) => 3,
        Error::Numerical(_) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads.max(1);
    let result = match &cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Sketch(a) => commands::sketch(a),
        Command::Train(a) => commands::train(a),
        Command::Dfrosh(a) => commands::dfrosh(a, threads),
        Command::Worker(a) => commands::worker(a),
        Command::Merge(a) => commands::merge_cmd(a),
        Command::Eval(a) => commands::eval(a, threads),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
