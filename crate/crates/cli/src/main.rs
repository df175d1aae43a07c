use std::process::ExitCode;

use clap::Parser;
use tracing_subscriber::EnvFilter;
use vidnav_cli::commands::{run, Cli};

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let json = cli.json;
    let stdout = std::io::stdout();
    match run(cli, &mut stdout.lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if json {
                eprintln!("{}", e.to_json());
            } else {
                match e.round {
                    Some(round) => eprintln!("error (round {round}): {}", e.message),
                    None => eprintln!("error: {}", e.message),
                }
            }
            ExitCode::FAILURE
        }
    }
}
