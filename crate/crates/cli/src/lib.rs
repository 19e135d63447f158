//! The `zp3` command-line front end: configuration, dataset I/O and
//! subcommands.

pub mod args;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod pipeline;
pub mod png;

use args::{Cli, Command};
use error::{CliResult, EXIT_OK};

pub fn dispatch(cli: &Cli) -> CliResult<()> {
    pipeline::init_threads()?;
    match &cli.command {
        Command::Init(a) => commands::init(a),
        Command::Sample(a) => commands::sample(a),
        Command::Refine(a) => commands::refine(a),
        Command::Eval(a) => commands::eval(a),
        Command::Render(a) => commands::render(a),
        Command::Synth(a) => commands::synth(a),
        Command::Config(a) => commands::config(a),
    }
}

/// Runs the parsed command and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("zp3: {e}");
            e.code
        }
    }
}
