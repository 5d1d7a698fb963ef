use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(bethe_dvf::cli::run())
}
