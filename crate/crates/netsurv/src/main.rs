use std::process::ExitCode;

fn main() -> ExitCode {
    match netsurv::commands::run_from(std::env::args_os()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("netsurv: {e}");
            e.exit_code()
        }
    }
}
