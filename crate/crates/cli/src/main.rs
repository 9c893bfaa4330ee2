use std::process::ExitCode;

use clap::Parser;

mod args;
mod commands;
mod io;

use args::{Cli, Command};

/// Process exit status, split by failure class.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
    Mismatch(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Mismatch(_) => 3,
        }
    }
}

pub type CmdResult = Result<(), Failure>;

/// Tags an error as bad input data (exit status 2).
pub trait DataContext<T> {
    fn data(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> DataContext<T> for Result<T, E> {
    fn data(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Data(e.into()))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => "warn",
        (_, 0) => "info",
        (_, 1) => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let result = match cli.command {
        Command::Build(a) => commands::build(a),
        Command::Stats(a) => commands::stats(a),
        Command::Query(a) => commands::query(a),
        Command::Novelty(a) => commands::novelty(a),
        Command::NnslStats(a) => commands::nnsl_stats(a),
        Command::Bound(a) => commands::bound(a),
        Command::LossBins(a) => commands::loss_bins(a),
        Command::Verify(a) => commands::verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(e) | Failure::Data(e) => eprintln!("error: {e:#}"),
                Failure::Mismatch(m) => eprintln!("verification failed: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}
