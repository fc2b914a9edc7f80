use std::process::ExitCode;

fn main() -> ExitCode {
    speckle_pgd::cli::main_with_args(std::env::args_os())
}
