use std::process::ExitCode;

use srbm::cli::{run_from, CliFailure};

fn main() -> ExitCode {
    match run_from(std::env::args_os()) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(CliFailure::Usage(e)) => {
            let code = e.exit_code();
            let _ = e.print();
            ExitCode::from(code as u8)
        }
        Err(e @ CliFailure::Run(_)) => {
            if let CliFailure::Run(err) = &e {
                eprintln!("error: {err}");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
