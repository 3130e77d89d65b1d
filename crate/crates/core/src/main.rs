use std::process::ExitCode;

use clap::Parser;
use klflow::cli::{execute, Cli, THREADS_ENV};

fn main() -> ExitCode {
    if let Some(n) = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("warning: could not set thread count: {e}");
        }
    }
    execute(Cli::parse())
}
