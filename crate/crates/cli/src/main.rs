//! `dspqsl`: model inspection, trajectory simulation, permutation sweeps and
//! optimization for dissipative state preparation.
//!
//! Exit codes: 0 success, 1 I/O, 2 configuration, 3 integrator abort,
//! 4 analytic/brute-force disagreement, 5 dark-state conditions violated or
//! speed limit undefined.

mod commands;
mod config;
mod csv;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;

#[derive(Parser)]
#[command(name = "dspqsl", version, about = "Dissipative state preparation workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Spectrum, target index, speed scale and dark-state residuals (JSON).
    ModelInfo(Common),
    /// Integrate the requested initial arrangements (CSV per arrangement).
    Simulate(Common),
    /// Score every distinct arrangement of the populations (CSV).
    Sweep(Common),
    /// Compare the analytic optimum with the brute-force winner (JSON).
    Optimize(Common),
}

#[derive(Args)]
pub struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output file (directory for `simulate`); stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Io = 1,
    Config = 2,
    Integrator = 3,
    Disagreement = 4,
    DarkState = 5,
}

#[derive(Debug)]
pub struct Failure {
    pub exit: Exit,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn new(exit: Exit, error: impl Into<anyhow::Error>) -> Self {
        Self {
            exit,
            error: error.into(),
        }
    }
}

pub trait OrExit<T> {
    fn or_exit(self, exit: Exit) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> OrExit<T> for Result<T, E> {
    fn or_exit(self, exit: Exit) -> Result<T, Failure> {
        self.map_err(|e| Failure::new(exit, e))
    }
}

fn load(common: &Common) -> Result<RunConfig, Failure> {
    if !common.config.exists() {
        return Err(Failure::new(
            Exit::Io,
            anyhow::anyhow!("config {} not found", common.config.display()),
        ));
    }
    let mut cfg = RunConfig::load(&common.config).or_exit(Exit::Config)?;
    if let Some(step) = common.step {
        cfg.step = step;
    }
    if let Some(t_end) = common.t_end {
        cfg.t_end = t_end;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::ModelInfo(c) => commands::model_info(&load(&c)?, c.out.as_deref()),
        Command::Simulate(c) => commands::simulate(&load(&c)?, c.out.as_deref()),
        Command::Sweep(c) => commands::sweep(&load(&c)?, c.out.as_deref()),
        Command::Optimize(c) => commands::optimize(&load(&c)?, c.out.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.exit as u8)
        }
    }
}
