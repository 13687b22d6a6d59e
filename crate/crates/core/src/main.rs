use std::process::ExitCode;

fn main() -> ExitCode {
    ser_adapt::cli::run(std::env::args_os())
}
