//! Command-line front end: configuration, experiment commands and plot-ready
//! output, one directory per run.

use anyhow::Result;
use clap::{ArgAction, Args, Parser, Subcommand};
use std::path::PathBuf;

pub mod commands;
pub mod config;
pub mod run;

use commands::{fit, profile, simulate, sweep, verify};
use run::{RunDir, DEFAULT_OUT_ROOT, OUT_ROOT_ENV};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const INPUT: i32 = 1;
    pub const NOT_CONVERGED: i32 = 2;
    pub const CHECK_FAILED: i32 = 3;
}

/// Outcome of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    NotConverged,
    ChecksFailed,
}

impl Status {
    pub fn code(self) -> i32 {
        match self {
            Status::Ok => exit::OK,
            Status::NotConverged => exit::NOT_CONVERGED,
            Status::ChecksFailed => exit::CHECK_FAILED,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::NotConverged => "not_converged",
            Status::ChecksFailed => "checks_failed",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "floquet", version, about = "Sideband amplification of a periodically driven spin amplifier")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML configuration file
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Override a configuration value, e.g. `--set spin.t2n=2` (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    /// Directory under which run directories are created
    #[arg(long, env = OUT_ROOT_ENV, default_value = DEFAULT_OUT_ROOT, global = true)]
    pub out_root: PathBuf,
    /// Exact run directory (must be absent or empty)
    #[arg(long, global = true)]
    pub run_dir: Option<PathBuf>,
    /// Worker threads [default: number of processors]
    #[arg(long, short, global = true)]
    pub jobs: Option<usize>,
    /// More log output (repeatable)
    #[arg(long, short, action = ArgAction::Count, global = true)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Amplification versus test frequency around the resonance comb
    Profile(profile::ProfileArgs),
    /// Integrate the Bloch equations and extract the sideband table
    Simulate(simulate::SimulateArgs),
    /// Sweep u, the test frequency or the drive frequency
    Sweep(sweep::SweepArgs),
    /// Fit the multi-line Fano model to measured data
    Fit(fit::FitArgs),
    /// Run the built-in invariant checks
    Verify(verify::VerifyArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Profile(_) => "profile",
            Command::Simulate(_) => "simulate",
            Command::Sweep(_) => "sweep",
            Command::Fit(_) => "fit",
            Command::Verify(_) => "verify",
        }
    }
}

/// Finished run: its directory and status.
#[derive(Debug, Clone)]
pub struct Finished {
    pub dir: PathBuf,
    pub status: Status,
}

/// Load the configuration, run the command and write the manifest.
pub fn execute(cli: &Cli, arguments: &[String]) -> Result<Finished> {
    let config = config::load(cli.common.config.as_deref(), &cli.common.set)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.common.jobs {
        if n == 0 {
            anyhow::bail!("--jobs: must be at least 1");
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build()?;
    let mut dir = RunDir::create(&cli.common.out_root, cli.command.name(), cli.common.run_dir.as_deref())?;
    let status = pool.install(|| match &cli.command {
        Command::Profile(a) => profile::run(&config, a, &mut dir),
        Command::Simulate(a) => simulate::run(&config, a, &mut dir),
        Command::Sweep(a) => sweep::run(&config, a, &mut dir),
        Command::Fit(a) => fit::run(&config, a, &mut dir),
        Command::Verify(a) => verify::run(&config, a, &mut dir),
    })?;
    let path = dir.path().to_path_buf();
    dir.finish(&config, arguments, status.label())?;
    Ok(Finished { dir: path, status })
}

/// Exit code for an error: numerical breakdown is 2, anything else an input error.
pub fn error_code(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<floquet_core::Error>() {
        Some(floquet_core::Error::NonFiniteState { .. }) => exit::NOT_CONVERGED,
        _ => exit::INPUT,
    }
}
