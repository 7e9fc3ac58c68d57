mod args;
mod commands;
mod config;
mod error;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command, Format};
use commands::Global;
use config::{layer, FileConfig};
use error::{usage, CliResult};

const SEED_ENV: &str = "SPIKELDA_SEED";

fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> CliResult<u64> {
    if let Some(s) = flag.or(file) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| usage(format!("{SEED_ENV}='{v}' is not an unsigned integer"))),
        Err(_) => Ok(spikelda::rng::DEFAULT_SEED),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let global = Global {
        seed: resolve_seed(cli.seed, file.seed)?,
        format: cli.format.or(file.format).unwrap_or(Format::Csv),
    };
    let threads = cli.threads.or(file.threads);
    if let Some(t) = threads {
        if t == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| error::CliError::Runtime(e.to_string()))?;
    }
    match &cli.command {
        Command::Simulate(a) => commands::simulate(&layer(a, file.simulate.as_ref())?, &global),
        Command::Fit(a) => commands::fit(&layer(a, file.fit.as_ref())?, &global),
        Command::Predict(a) => commands::predict(&layer(a, file.predict.as_ref())?, &global),
        Command::Tune(a) => commands::tune(&layer(a, file.tune.as_ref())?, &global),
        Command::Diagnose(a) => commands::diagnose(&layer(a, file.diagnose.as_ref())?, &global),
        Command::Info => commands::info(&global, rayon::current_num_threads()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
