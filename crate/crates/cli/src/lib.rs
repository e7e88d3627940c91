//! Command-line front end: argument definitions, command implementations and
//! the report files they emit.
//!
//! Exit codes are stable: 0 success, 1 usage error, 2 validation error,
//! 3 numerical failure.

pub mod cli;
pub mod commands;
pub mod report;

use std::ffi::OsString;
use std::io::Write;

use clap::error::ErrorKind;
use clap::Parser;

pub use commands::{exit_code, Failure, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, EXIT_VALIDATION};

/// Parses `args` (program name first) and runs the command, returning the
/// process exit code.
pub fn run<I, A>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let parsed = match cli::Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let text = e.render().to_string();
            if code == EXIT_OK {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    match commands::execute(parsed, out, err) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {f}");
            f.code
        }
    }
}
