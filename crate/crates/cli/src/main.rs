use std::io::Write;
use std::process::ExitCode;

fn main() -> ExitCode {
    let config = match levelwalk_cli::parse_args(std::env::args_os()) {
        Ok(config) => config,
        Err(err) => {
            let _ = err.print();
            return ExitCode::from(if err.use_stderr() { levelwalk_cli::EXIT_USAGE } else { 0 });
        }
    };
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    let code = levelwalk_cli::execute(&config, &mut stdout.lock(), &mut stderr.lock());
    let _ = std::io::stdout().flush();
    ExitCode::from(code)
}
