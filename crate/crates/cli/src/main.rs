use std::process::ExitCode;

use clap::Parser;
use rootcast_cli::{run, Cli, OUTPUT_DIR_ENV};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let env = std::env::var(OUTPUT_DIR_ENV).ok();
    match run(&cli, env.as_deref()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rootcast: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
