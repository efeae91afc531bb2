//! Command-line front end for `horizon-limit`.
//!
//! Exit codes: 0 when every requested check passes or the computation
//! converged, 2 on a failed check, non-convergence or a module error, 1 on
//! usage and configuration errors.

pub mod config;
pub mod run;

use std::ffi::OsString;

use clap::Parser;

pub use config::{parse_config, Cli, Command, RunConfig};
pub use run::{run, Outcome};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILED: i32 = 2;

/// Parses `args` (program name first), runs the command and returns the
/// exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let workers = match config::workers_from_env() {
        Ok(w) => w,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let cfg = match parse_config(cli.command, workers) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            eprintln!("usage: horizon-limit <costate|verify|shoot|oracle|catalog> --problem <ID|FILE> [options]");
            return EXIT_USAGE;
        }
    };
    match run(&cfg) {
        Ok(Outcome::Success) => EXIT_OK,
        Ok(Outcome::Failure) => EXIT_FAILED,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}
