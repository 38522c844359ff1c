//! The `endofinder` command line and its HTTP query service.

pub mod args;
pub mod commands;
pub mod service;

use std::fmt;

pub use args::Cli;

/// A bad invocation, as opposed to bad input data. Exits with status 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<UsageError>().is_some() {
        EXIT_USAGE
    } else {
        EXIT_DATA
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    commands::run(cli.command, &cli.global)
}
