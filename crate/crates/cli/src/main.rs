//! `fractalwalk`: build augmented trees of self-similar sets, run λ-walks on
//! them and check the exact identities.
//!
//! Exit codes: 0 ok, 1 verification failure, 2 configuration error,
//! 3 numerical or undecidable-edge error. Thread count follows
//! `RAYON_NUM_THREADS`.

mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;
use fractalwalk::error::Error;

use crate::commands::{Command, VerifyFailed};
use crate::config::{CommonArgs, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "fractalwalk", version, about = "Random walks on augmented trees of self-similar sets")]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<VerifyFailed>().is_some() {
        return 1;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_) | Error::UnknownFormat(_) | Error::NotAdmissible { .. } | Error::UnknownVertex(_)) => 2,
        Some(Error::Json(_)) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = RunConfig::load(&cli.common)
        .and_then(|cfg| cfg.resolve().map_err(anyhow::Error::from))
        .and_then(|resolved| commands::run(&cli.command, &resolved));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
