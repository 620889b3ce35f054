mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::Parser;

use args::Cli;
use hierperc::Error;

/// Exit statuses.
const OK: u8 = 0;
const CHECK_FAILED: u8 = 1;
const USAGE: u8 = 2;
const RESOURCE: u8 = 3;

pub enum Outcome {
    Passed,
    Failed,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { USAGE } else { OK });
        }
    };
    match commands::run(cli.command) {
        Ok(Outcome::Passed) => ExitCode::from(OK),
        Ok(Outcome::Failed) => ExitCode::from(CHECK_FAILED),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Resource(_) => RESOURCE,
                Error::Usage(_) | Error::Domain(_) => USAGE,
            })
        }
    }
}
