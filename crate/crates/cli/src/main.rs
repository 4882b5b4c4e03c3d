use std::process::ExitCode;

use fdsig_cli::{dispatch, parse_invocation, CliError};

fn main() -> ExitCode {
    match parse_invocation(std::env::args_os()).and_then(|inv| {
        if let Some(n) = inv.threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
        }
        dispatch(&inv, &mut std::io::stdout().lock())
    }) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Clap(e)) => {
            let _ = e.print();
            ExitCode::from(e.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("fdsig: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
