//! `mave`: one entry point for cleaning, annotation, splitting, statistics, training,
//! prediction and evaluation. Exit status is 0 on success, 1 for usage or validation
//! errors and 2 for I/O errors. Verbosity comes from `MAVE_LOG` (default `warn`).

mod args;
mod commands;
mod util;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};

fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Clean(a) => commands::clean(a),
        Command::Annotate(a) => commands::annotate(a),
        Command::Split(a) => commands::split(a),
        Command::Stats(a) => commands::stats(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::FewShot(a) => commands::few_shot(a),
        Command::Predict(a) => commands::predict(a),
        Command::Synth(a) => commands::synth(a),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MAVE_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            let ok = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            std::process::exit(if ok { 0 } else { 1 });
        }
    };
    if let Err(err) = run(&cli) {
        eprintln!("error: {err:#}");
        std::process::exit(util::exit_code(&err));
    }
}
