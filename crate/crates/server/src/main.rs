use std::process::ExitCode;

fn main() -> ExitCode {
    cnd_server::cli::main()
}
