use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(simam_cli::run(std::env::args_os()))
}
