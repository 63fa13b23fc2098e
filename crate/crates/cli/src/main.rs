use std::fs;
use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use relay_cli::{out_path, run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let text = match run(&cli.command) {
        Ok(text) => text,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let written = match out_path(&cli.command) {
        Some(path) => fs::write(path, text.as_bytes())
            .map_err(|e| format!("cannot write {}: {e}", path.display())),
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| format!("cannot write output: {e}")),
    };
    match written {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
