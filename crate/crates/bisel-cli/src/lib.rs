//! Command-line surface of the bi-level selection toolkit: CSV ingestion,
//! run configuration, preprocessing for real-data pipelines, and report
//! emission. The binary is a thin wrapper over [`run`].

// negated comparisons like `!(x > 0.0)` are deliberate: they reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::ffi::OsString;

use clap::Parser;

pub mod args;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod preprocess;
pub mod report;

pub use config::RunConfig;
pub use error::CliError;

/// Parses `argv` and executes the selected command.
///
/// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
/// Diagnostics go to standard error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match args::Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprint!("{e}");
            return 1;
        }
    };
    let outcome = match &cli.command {
        args::Command::Fit(a) => commands::fit(a),
        args::Command::Cv(a) => commands::cv(a),
        args::Command::Simulate(a) => commands::simulate(a),
        args::Command::Pipeline(a) => commands::pipeline(a),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
