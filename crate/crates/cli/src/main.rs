use std::path::PathBuf;
use std::process::ExitCode;

use bilevel_flow_cli::config::Cli;
use bilevel_flow_cli::report::{render, write_artifacts};
use bilevel_flow_cli::{execute, CliError};
use clap::Parser;

const OUT_ENV: &str = "BILEVEL_FLOW_OUT";

fn main() -> ExitCode {
    let cli = Cli::parse();
    let dir = cli
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"));
    let result = execute(&cli.command).and_then(|outcome| {
        write_artifacts(&dir, &render(&cli.command, &outcome))?;
        Ok(outcome)
    });
    match result {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            println!("wrote {}", dir.display());
            ExitCode::from(outcome.status.exit_code() as u8)
        }
        Err(e) => fail(&e),
    }
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("{}", e.record());
    ExitCode::from(e.exit_code() as u8)
}
