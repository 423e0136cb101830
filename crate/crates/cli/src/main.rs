use std::net::SocketAddr;
use std::process::ExitCode;

use clap::Parser;
use netting_cli::commands::{execute, Cli, CliError, Command};
use netting_cli::service;
use netting_core::{Store, Workbench};

fn serve(cli: &Cli, addr: SocketAddr) -> Result<(), CliError> {
    let store = Store::open(&cli.store).map_err(CliError::from)?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Domain { reason: "Io".into(), message: e.to_string() })?;
    runtime
        .block_on(service::serve(addr, Workbench::new(store)))
        .map_err(|e| CliError::Domain { reason: "Io".into(), message: e.to_string() })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Serve { port, bind } => serve(&cli, SocketAddr::new(bind, port)).map(|()| String::new()),
        _ => execute(&cli),
    };
    match result {
        Ok(out) => {
            if !out.is_empty() {
                println!("{out}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
