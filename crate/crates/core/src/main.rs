use std::process::ExitCode;

use smectic_cip::driver::{config_from_args, emit_table, run_study};

fn main() -> ExitCode {
    let config = match config_from_args(std::env::args()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(3);
        }
    };
    match run_study(&config) {
        Ok(report) => {
            if config.output_path.is_none() {
                print!("{}", emit_table(&report, config.output_format));
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            if let Some(partial) = e.partial() {
                eprint!("{}", emit_table(partial, config.output_format));
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
