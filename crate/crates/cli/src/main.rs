use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    // Usage errors exit with clap's code 2, same as configuration errors.
    let cli = otamv_cli::Cli::parse();
    match otamv_cli::execute(cli.command) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("otamv: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
