use std::process::ExitCode;

use clap::Parser;
use sonmf_cli::{run, Cli};

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    // Usage errors exit 2 from inside clap.
    let cli = Cli::parse_from(&argv);
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(&cli, &argv) {
        Ok(manifest) => {
            log::info!("wrote {} files", manifest.outputs.len() + 1);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("sonmf-kit: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
