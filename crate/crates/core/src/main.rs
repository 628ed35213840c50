use std::io::Write;
use std::process::ExitCode;

fn main() -> ExitCode {
    let outcome = gauss_eot::cli::run_command(std::env::args_os());
    if !outcome.stdout.is_empty() {
        let mut out = std::io::stdout().lock();
        let _ = out.write_all(outcome.stdout.as_bytes());
    }
    if !outcome.stderr.is_empty() {
        eprint!("{}", outcome.stderr);
        if !outcome.stderr.ends_with('\n') {
            eprintln!();
        }
    }
    ExitCode::from(outcome.code as u8)
}
