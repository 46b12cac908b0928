use std::io::Write;

use clap::error::ErrorKind;
use clap::Parser;
use credcli::{Cli, CliError};
use serde_json::json;

/// Writes one line to stdout, tolerating a closed pipe.
fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{text}");
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                emit(&json!({"help": e.render().to_string()}).to_string());
                std::process::exit(if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand { 2 } else { 0 });
            }
            _ => {
                let err = CliError::Usage(e.render().to_string().trim().to_string());
                emit(&err.to_json().to_string());
                eprintln!("{}", err.code());
                std::process::exit(err.exit_code());
            }
        },
    };
    match credcli::run(cli) {
        Ok(Some(value)) => emit(&serde_json::to_string_pretty(&value).expect("JSON value serializes")),
        Ok(None) => {}
        Err(e) => {
            emit(&e.to_json().to_string());
            eprintln!("{}", e.code());
            std::process::exit(e.exit_code());
        }
    }
}
