use std::process::ExitCode;

use clap::Parser;
use gcbm_cli::args::{Cli, Command};
use gcbm_cli::{commands, exit_code, server};

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Extract(args) => commands::extract(&args).map(drop)?,
        Command::Train(args) => commands::train(&args).map(drop)?,
        Command::Explain(args) => commands::explain(&args).map(drop)?,
        Command::Intervene(args) => commands::intervene(&args).map(drop)?,
        Command::Serve(args) => tokio::runtime::Builder::new_multi_thread()
            .enable_all()
            .build()?
            .block_on(server::serve(&args))?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new()
        .parse_filters(&cli.log)
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
