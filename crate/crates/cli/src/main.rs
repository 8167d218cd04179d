use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use proxyaudit_cli::config::Cli;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    ExitCode::from(proxyaudit_cli::execute(&cli))
}
