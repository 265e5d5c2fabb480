use std::process::ExitCode;

use clap::Parser;

use skyguard::cli::{run, Cli};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            // Usage errors are configuration errors; 2 is reserved for
            // missing input files.
            return ExitCode::from(if usage { 3 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("skyguard: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
