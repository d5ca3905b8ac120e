//! `ocae` command-line tool.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 bad data or arguments,
//! 3 training divergence.

mod args;
mod commands;
mod config;
mod error;

use clap::Parser;

use crate::args::Cli;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let raw: Vec<_> = std::env::args_os().collect();
    let argv = match config::merge_config(raw) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    };
    let cli = Cli::parse_from(argv);
    if let Err(e) = commands::run(cli.command) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
