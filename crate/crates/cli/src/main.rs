use std::process::ExitCode;

use braidflow::pipeline::SessionStore;
use braidflow_cli::cmd::{self, Cli, Command};
use braidflow_cli::server::{self, AppState};
use clap::Parser;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Serve { port, bind, store } => {
            let sessions = match store {
                Some(dir) => SessionStore::with_dir(dir),
                None => SessionStore::new(),
            };
            tokio::runtime::Runtime::new()
                .map_err(anyhow::Error::from)
                .and_then(|rt| {
                    rt.block_on(server::serve(
                        &format!("{bind}:{port}"),
                        AppState::new(sessions),
                    ))
                })
        }
        other => cmd::run(other),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
