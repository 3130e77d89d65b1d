//! Command-line front end: `run <config> --out <dir>` and `check [scope]`.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::checks::{self, CheckOptions, Scope};

pub use config::{
    parse_config, FlowSection, GaussianSpec, InitSpec, LoadedConfig, OutputSection, RunConfig,
    TargetSpec,
};
pub use run::{
    cmd_run, ensemble_csv, metrics_csv, RunManifest, ENSEMBLE_FILE, MANIFEST_FILE, METRICS_FILE,
};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "KLFLOW_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "klflow",
    version,
    about = "Kernelized gradient flows of the inclusive KL divergence"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the flow described by a TOML config.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the built-in acceptance checks.
    Check {
        #[arg(value_enum, default_value_t = ScopeArg::All)]
        scope: ScopeArg,
        /// Gaussian bandwidth used by the checks.
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        sigma: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScopeArg {
    Kernels,
    Flows,
    Oracles,
    All,
}

impl From<ScopeArg> for Scope {
    fn from(s: ScopeArg) -> Self {
        match s {
            ScopeArg::Kernels => Scope::Kernels,
            ScopeArg::Flows => Scope::Flows,
            ScopeArg::Oracles => Scope::Oracles,
            ScopeArg::All => Scope::All,
        }
    }
}

/// Executes a parsed command line and returns the process exit code.
pub fn execute(cli: Cli) -> ExitCode {
    match cli.command {
        Command::Run { config, out } => match cmd_run(&config, &out) {
            Ok(manifest) => {
                if let Some(r) = manifest.final_record {
                    println!(
                        "finished step {} (t = {}): mmd2 = {:e}",
                        r.step, r.time, r.mmd2
                    );
                }
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        },
        Command::Check { scope, sigma } => {
            let outcomes = checks::run_scope(scope.into(), &CheckOptions { sigma });
            print!("{}", checks::format_table(&outcomes));
            if outcomes.iter().all(|o| o.passed) {
                ExitCode::SUCCESS
            } else {
                for o in outcomes.iter().filter(|o| !o.passed) {
                    eprintln!("failed: {} {}", o.id, o.name);
                }
                ExitCode::FAILURE
            }
        }
    }
}
