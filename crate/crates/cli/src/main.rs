use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(chatemg_cli::run(std::env::args_os()))
}
