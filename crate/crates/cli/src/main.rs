use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let code = panic::catch_unwind(AssertUnwindSafe(|| ahakit_cli::run(std::env::args_os()))).unwrap_or(2);
    ExitCode::from(code as u8)
}
