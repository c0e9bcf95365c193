// SPDX-License-Identifier: MIT OR Apache-2.0

//! `drydown`: segment soil-moisture series, simulate scenarios, score
//! detections and sweep penalties. Every command writes plain CSV and a
//! JSON manifest.
//!
//! Exit codes: 0 success, 2 invalid input or configuration, 3 I/O failure,
//! 4 no segmentation possible.

mod args;
mod config;
mod detect;
mod evaluate;
mod output;
mod simulate;
mod sweep;

use std::process::ExitCode;

use clap::Parser;
use drydown_core::Error;

use crate::args::{Cli, Command};
use crate::config::RunConfig;

/// Line-per-stage progress on stderr.
pub struct Log {
    quiet: bool,
}

impl Log {
    pub fn stage(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("drydown: {}", msg.as_ref());
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Io { .. } | Error::Csv { .. } => 3,
                Error::NoValidSegmentation => 4,
                _ => 2,
            };
        }
        if cause.is::<std::io::Error>() || cause.is::<csv::Error>() {
            return 3;
        }
    }
    2
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut config = RunConfig::load(cli.config.as_deref())?;
    if cli.jobs.is_some() {
        config.jobs = cli.jobs;
    }
    let log = Log { quiet: cli.quiet };
    let prepare = |config: &mut RunConfig| -> anyhow::Result<()> {
        config.validate()?;
        if let Some(jobs) = config.jobs {
            rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().ok();
        }
        Ok(())
    };
    match &cli.command {
        Command::Detect(a) => {
            config.apply_input(&a.series);
            config.apply_pelt(&a.pelt);
            prepare(&mut config)?;
            detect::run(a, &config, &log)
        }
        Command::Simulate(a) => {
            prepare(&mut config)?;
            simulate::run(a, &mut config, &log)
        }
        Command::Evaluate(a) => {
            prepare(&mut config)?;
            evaluate::run(a, &mut config, &log)
        }
        Command::Sweep(a) => {
            config.apply_input(&a.series);
            config.apply_pelt(&a.pelt);
            prepare(&mut config)?;
            sweep::run(a, &mut config, &log)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("drydown: error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
