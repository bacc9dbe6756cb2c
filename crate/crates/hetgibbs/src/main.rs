use std::process::ExitCode;

fn main() -> ExitCode {
    hetgibbs::cli::main_with(std::env::args_os())
}
