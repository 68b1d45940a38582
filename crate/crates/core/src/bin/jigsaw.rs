use std::process::ExitCode;

fn main() -> ExitCode {
    jigsaw_core::cli::main_with_args(std::env::args_os())
}
