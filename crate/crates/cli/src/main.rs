use std::process::ExitCode;

use clap::Parser;
use desorb_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("desorb: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
