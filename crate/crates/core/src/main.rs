use std::process::ExitCode;

fn main() -> ExitCode {
    dqcsim::cli::main_with_args(std::env::args_os())
}
