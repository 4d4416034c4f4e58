mod args;
mod commands;
mod io;

use std::process::ExitCode;

use clap::{CommandFactory, Parser};

use args::Cli;
use commands::UsageError;

fn main() -> ExitCode {
    // clap exits with 2 on bad arguments and 0 on --help/--version
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}\n");
            eprintln!("{}", Cli::command().render_usage());
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
