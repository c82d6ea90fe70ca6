//! `omniseg` command-line entry point.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 data or
//! checkpoint error, 4 numeric failure. `OMNISEG_NUM_WORKERS` caps the
//! worker pool.

mod cli;
mod commands;
mod error;
mod output;

use std::process::ExitCode;

use clap::Parser;
use omniseg::Exec;

use crate::cli::{Cli, Command, ConfigFile};
use crate::error::{CliResult, EXIT_OK};

fn run(cli: Cli) -> CliResult<()> {
    let file = ConfigFile::load(cli.config.as_deref())?;
    let exec = Exec::Parallel;
    match cli.command {
        Command::Synth(a) => commands::synth(&a.resolve(&file)?, exec),
        Command::Train(a) => commands::train(&a.resolve(&file)?, exec),
        Command::Infer(a) => commands::infer(&a.resolve(&file)?, exec),
        Command::SegmentWsi(a) => commands::segment_wsi(&a.resolve(&file)?, exec),
        Command::Evaluate(a) => commands::evaluate(&a.resolve(&file)?, exec),
        Command::Spots(a) => commands::spots(&a.resolve(&file)?, exec),
        Command::Ablate(a) => commands::ablate(&a.resolve(&file)?, exec),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Some(n) = omniseg::par::init_workers_from_env() {
        log::debug!("worker pool capped at {n}");
    }
    // clap exits with status 2 on usage errors.
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(e) => {
            eprintln!("omniseg: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
