//! Command-line driver: `simulate`, `average`, `verify-billiard` and
//! `converge`, all reading one TOML config.

pub mod commands;
pub mod config;

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use piston_core::{ConfigError, HarnessError};
use serde::Serialize;
use thiserror::Error;

use crate::commands::SimulateFlags;
use crate::config::Config;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Exclusion(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Exclusion(_) => 3,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(c) => c.into(),
            e @ HarnessError::ExclusionThreshold { .. } => CliError::Exclusion(e.to_string()),
            e => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "piston", version, about = "Adiabatic piston: micro simulation, averaged dynamics, billiard checks")]
pub struct Cli {
    /// Output directory.
    #[arg(long, global = true, env = "PISTON_OUT_DIR", default_value = "piston-out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One micro trajectory: trajectory.csv, simulate.json, optional events.csv.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Slow-time horizon T.
        #[arg(long)]
        horizon: Option<f64>,
        /// Also write every collision to events.csv.
        #[arg(long)]
        dump_events: bool,
    },
    /// Averaged solution: averaged.csv and average.json.
    Average { config: PathBuf },
    /// Frozen-billiard identities and diagnostics: billiard.json.
    VerifyBilliard(Parallel),
    /// Convergence experiment over the eps grid: converge.json and converge_samples.csv.
    Converge(Parallel),
}

#[derive(Debug, Args)]
pub struct Parallel {
    pub config: PathBuf,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: PathBuf,
    pub config_hash: String,
    pub version: &'static str,
    pub seed: u64,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub outputs: Vec<PathBuf>,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn with_jobs<T>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError>
where
    T: Send,
{
    match jobs {
        None => Ok(f()),
        Some(0) => Err(CliError::Config("--jobs must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Runs one parsed command and returns the manifest it wrote.
pub fn run(cli: &Cli) -> Result<RunManifest, CliError> {
    let started_unix = unix_now();
    let out = cli.out.as_path();
    let (name, path) = match &cli.command {
        Command::Simulate { config, .. } => ("simulate", config),
        Command::Average { config } => ("average", config),
        Command::VerifyBilliard(p) => ("verify-billiard", &p.config),
        Command::Converge(p) => ("converge", &p.config),
    };
    let config = Config::load(path)?;
    commands::ensure_dir(out)?;
    let mut seed = config.seed;
    let outputs = match &cli.command {
        Command::Simulate { eps, seed: s, horizon, dump_events, .. } => {
            seed = s.unwrap_or(seed);
            let flags = SimulateFlags { eps: *eps, seed: *s, horizon: *horizon, dump_events: *dump_events };
            commands::simulate(&config, &flags, out)?
        }
        Command::Average { .. } => commands::average(&config, out)?,
        Command::VerifyBilliard(p) => with_jobs(p.jobs, || commands::verify_billiard(&config, out))??,
        Command::Converge(p) => with_jobs(p.jobs, || commands::converge(&config, out))??,
    };
    let manifest = RunManifest {
        command: name.to_string(),
        config: path.clone(),
        config_hash: config.hash(),
        version: env!("CARGO_PKG_VERSION"),
        seed,
        started_unix,
        finished_unix: unix_now(),
        outputs,
    };
    write_manifest(out, name, &manifest)?;
    Ok(manifest)
}

fn write_manifest(out: &Path, name: &str, manifest: &RunManifest) -> Result<(), CliError> {
    let path = out.join(format!("{name}.manifest.json"));
    let text = serde_json::to_string_pretty(manifest).map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(&path, text + "\n").map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

/// Parses `args`, runs, reports errors on stderr and returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(m) => {
            for p in &m.outputs {
                println!("{}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("piston {}: {e}", match &cli.command {
                Command::Simulate { .. } => "simulate",
                Command::Average { .. } => "average",
                Command::VerifyBilliard(_) => "verify-billiard",
                Command::Converge(_) => "converge",
            });
            e.exit_code()
        }
    }
}
