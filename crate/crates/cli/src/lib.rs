//! Command-line front end: CSV ingestion, command dispatch and reports.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod commands;
pub mod config;
pub mod error;
pub mod input;
pub mod report;

use std::io::Write;
use std::path::PathBuf;

use commands::{run_command, Output};
use config::{Cli, Format, OUT_DIR_ENV};
use error::{CliError, ErrorReport};

/// Exit status when the verification suite has a failing check.
pub const EXIT_VERIFICATION_FAILED: u8 = 3;

fn destination(cli: &Cli, extension: &str) -> Option<PathBuf> {
    if let Some(out) = &cli.out {
        return Some(out.clone());
    }
    let dir = std::env::var_os(OUT_DIR_ENV).filter(|d| !d.is_empty())?;
    Some(PathBuf::from(dir).join(format!("{}.{extension}", cli.command.name())))
}

fn write_output(cli: &Cli, text: &str, extension: &str) -> Result<(), CliError> {
    match destination(cli, extension) {
        Some(path) => {
            if cli.out.is_none() {
                if let Some(dir) = path.parent() {
                    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
                }
            }
            std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
        }
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::io("<stdout>", e)),
    }
}

fn run(cli: &Cli) -> Result<bool, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot configure thread pool: {e}")))?;
    }
    let outcome = run_command(&cli.command)?;
    match &outcome.output {
        Output::Report(doc) => {
            let text = match cli.format {
                Format::Machine => doc.to_machine(),
                Format::Table => doc.to_table(),
            };
            write_output(cli, &text, cli.format.extension())?;
        }
        Output::Csv(text) => write_output(cli, text, "csv")?,
    }
    Ok(outcome.verification_failed)
}

/// Runs a parsed command line and returns the process exit status.
pub fn execute(cli: &Cli) -> u8 {
    match run(cli) {
        Ok(false) => 0,
        Ok(true) => EXIT_VERIFICATION_FAILED,
        Err(err) => {
            let mut stderr = std::io::stderr().lock();
            let _ = match cli.format {
                Format::Machine => {
                    let json = serde_json::to_string(&ErrorReport::new(&err))
                        .expect("error report serializes");
                    writeln!(stderr, "{json}")
                }
                Format::Table => writeln!(stderr, "error[{}]: {err}", err.code()),
            };
            err.exit_code()
        }
    }
}
