use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use nlgrad_cli::{configure_threads, exit_code, parse_args, run, Cli, EXIT_OK, EXIT_RUNTIME};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::from(EXIT_OK as u8),
                _ => ExitCode::from(EXIT_RUNTIME as u8),
            };
        }
    };
    let config = match configure_threads().and_then(|()| parse_args(cli)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_RUNTIME as u8);
        }
    };
    match run(&config) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
