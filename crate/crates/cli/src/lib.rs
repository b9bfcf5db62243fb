//! The `apr` command-line tool.
//!
//! Exit codes: 0 success, 1 other failure, 2 usage, 3 I/O or malformed
//! input, 4 empty result under a guard, 5 numeric failure.

mod args;
mod cmd;
pub mod config;
mod output;

use std::ffi::OsString;
use std::io::Write;

use clap::error::ErrorKind;
use clap::Parser;

pub use args::{Cli, Command};

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_EMPTY: i32 = 4;
pub const EXIT_NUMERIC: i32 = 5;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Empty(String),
    Numeric(String),
    Failed(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io(_) => EXIT_IO,
            CliError::Empty(_) => EXIT_EMPTY,
            CliError::Numeric(_) => EXIT_NUMERIC,
            CliError::Failed(_) => EXIT_FAILURE,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::Empty(m) | CliError::Numeric(m) | CliError::Failed(m) => {
                f.write_str(m)
            }
        }
    }
}

impl From<apr_core::Error> for CliError {
    fn from(e: apr_core::Error) -> Self {
        use apr_core::Error as E;
        let msg = e.to_string();
        match e {
            E::Io { .. } | E::MalformedFile(_) | E::NonRigidPose { .. } => CliError::Io(msg),
            E::InvalidConfig(_) => CliError::Usage(msg),
            E::NoPairs | E::EmptyResults => CliError::Empty(msg),
            E::NonFiniteLoss { .. } | E::NonFinite(_) => CliError::Numeric(msg),
            _ => CliError::Failed(msg),
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code. Reports go to `out`, diagnostics to stderr.
pub fn run_with<W: Write>(args: impl IntoIterator<Item = OsString>, out: &mut W) -> i32 {
    let result = config::expand(args.into_iter().collect()).and_then(|argv| match Cli::try_parse_from(argv) {
        Ok(cli) => cmd::dispatch(cli, out),
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = write!(out, "{}", e.render());
            Ok(())
        }
        Err(e) => Err(CliError::Usage(e.render().to_string().trim_end().to_string())),
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.to_string().trim_start_matches("error: "));
            e.code()
        }
    }
}

pub fn run(args: impl IntoIterator<Item = OsString>) -> i32 {
    run_with(args, &mut std::io::stdout().lock())
}
