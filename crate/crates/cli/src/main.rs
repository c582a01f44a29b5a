use std::process::ExitCode;

fn main() -> ExitCode {
    let mut stdout = std::io::stdout();
    match corrprune_cli::run(std::env::args_os(), &mut stdout) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                corrprune_cli::CliError::Usage(msg) => eprint!("{msg}"),
                corrprune_cli::CliError::Data(_) => eprintln!("error: {e}"),
            }
            ExitCode::from(e.exit_code())
        }
    }
}
