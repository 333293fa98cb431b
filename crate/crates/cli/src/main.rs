//! `ghdo`: steady states of dissipative spin chains with Gram-Hadamard
//! density operators.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ghdo_core::GhdoError;

use crate::config::{ConfigError, RunConfig};

#[derive(Parser)]
#[command(name = "ghdo", version, about = "Variational steady states of open spin chains")]
struct Cli {
    /// Worker threads (defaults to RAYON_NUM_THREADS or the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve a network to the steady state of the configured Lindbladian.
    Run {
        config: PathBuf,
        /// Override a configuration value, e.g. `--set tdvp.dt=0.01`.
        #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Sample observables and the Rényi-2 entropy from a checkpoint.
    Estimate {
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 4096)]
        samples: usize,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Exact dense steady state of the configured physics (N ≤ 6).
    Oracle {
        config: PathBuf,
        #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
        overrides: Vec<String>,
        /// Also write the steady-state density matrix in the matrix format.
        #[arg(long)]
        matrix_out: Option<PathBuf>,
    },
    /// Run an invariant suite: schur, positivity, constructors, sampler,
    /// gradient, tdvp-fixedpoint, or all.
    Verify {
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn print_json<T: serde::Serialize>(value: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn execute(cli: Cli) -> anyhow::Result<ExitCode> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Run { config, overrides } => {
            let config = RunConfig::load(&config, &overrides)?;
            print_json(&commands::run(&config)?)?;
        }
        Command::Estimate {
            checkpoint,
            samples,
            alpha,
            seed,
        } => print_json(&commands::estimate(&checkpoint, samples, alpha, seed)?)?,
        Command::Oracle {
            config,
            overrides,
            matrix_out,
        } => {
            let config = RunConfig::load(&config, &overrides)?;
            print_json(&commands::oracle(&config, matrix_out.as_deref())?)?;
        }
        Command::Verify { suite, seed } => {
            let reports = commands::verify(&suite, seed)?;
            for r in &reports {
                print!("{r}");
            }
            if !reports.iter().all(|r| r.passed()) {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            let usage = err.downcast_ref::<ConfigError>().is_some()
                || matches!(err.downcast_ref::<GhdoError>(), Some(GhdoError::Input(m)) if m.starts_with("unknown suite"));
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}
