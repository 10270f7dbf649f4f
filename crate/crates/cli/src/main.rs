mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use crate::args::{Cli, Command};
use crate::commands::CliError;

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let threads = cli.threads;
    match &cli.command {
        Command::Train(a) => commands::train(a, threads),
        Command::Dist(a) => commands::dist(a),
        Command::BenchKnn(a) => commands::bench_knn(a, threads),
        Command::BenchFixedK(a) => commands::bench_fixed_k(a, threads),
        Command::BenchRetrieval(a) => commands::bench_retrieval(a, threads),
        Command::ForestSweep(a) => commands::forest_sweep_cmd(a, threads),
        Command::GenSwissroll(a) => commands::gen_swissroll(a, threads),
    }
}

fn main() -> ExitCode {
    // clap exits with status 2 on parse errors
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rfd: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
