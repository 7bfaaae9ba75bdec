use std::process::ExitCode;

fn main() -> ExitCode {
    famsplit::cli::run(std::env::args_os())
}
