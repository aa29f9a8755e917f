mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;
use excon_core::{Error, ErrorKind};

use crate::args::Cli;

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERIC: u8 = 4;

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>().map(Error::kind) {
        Some(ErrorKind::Config) => EXIT_CONFIG,
        Some(ErrorKind::Numeric) => EXIT_NUMERIC,
        Some(ErrorKind::Data) | None => EXIT_DATA,
    }
}

/// Caps the global thread pool from `EXCON_THREADS`; 0 or unset means auto.
fn configure_threads() -> Result<(), Error> {
    let Ok(raw) = std::env::var("EXCON_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("EXCON_THREADS must be a non-negative integer, got `{raw}`")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot configure thread pool: {e}")))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads()
        .map_err(anyhow::Error::from)
        .and_then(|()| commands::run(cli.command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
