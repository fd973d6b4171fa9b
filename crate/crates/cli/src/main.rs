//! `scm`: command-line front end for scanning-cavity microscopy models.
//!
//! Every subcommand runs on built-in synthetic defaults, writes its outputs
//! plus `manifest.json` into `--out`, and exits with 0 on success, 2 on
//! invalid input and 3 on numerical failure.

mod commands;
mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{}{source}", context.as_deref().map(|c| format!("{c}: ")).unwrap_or_default())]
    Core {
        context: Option<String>,
        #[source]
        source: scm_core::Error,
    },
}

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    pub fn core_at(path: &Path, source: scm_core::Error) -> Self {
        CliError::Core {
            context: Some(path.display().to_string()),
            source,
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core { source, .. } if source.is_numerical() => 3,
            _ => 2,
        }
    }
}

impl From<scm_core::Error> for CliError {
    fn from(source: scm_core::Error) -> Self {
        CliError::Core { context: None, source }
    }
}

#[derive(Debug, Parser)]
#[command(name = "scm", version, about = "Scanning-cavity microscopy simulations and fits")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON config file (or a previous run's manifest.json).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Config override as a dotted key, e.g. `scan.points=60`. Repeatable.
    #[arg(long = "set", global = true, value_name = "K=V")]
    overrides: Vec<String>,

    /// Random seed (default 0, or the seed of a manifest given as --config).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; outputs do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Detected or numeric emission spectrum.
    Spectrum,
    /// Fit the detected-spectrum model to a spectrum.
    Fit,
    /// Simulate spectra along a cavity scan track.
    Scan,
    /// Recover a sample profile from a PL scan and the cavity response.
    Deconvolve,
    /// Intensity correlation of a three-level emitter.
    G2,
    /// ESR spectrum and Rabi oscillations of the NV ground-state spin.
    Spin,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Fit => "fit",
            Command::Scan => "scan",
            Command::Deconvolve => "deconvolve",
            Command::G2 => "g2",
            Command::Spin => "spin",
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::input("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::input(format!("thread pool: {e}")))?;
    }
    let loaded = config::resolve(cli.config.as_deref(), &cli.overrides)?;
    let seed = cli.seed.or(loaded.manifest_seed).unwrap_or(0);
    let cfg = loaded.config;
    let mut out = output::OutputDir::create(&cli.out)?;
    if let Some(p) = &cli.config {
        out.read_input(p)?;
    }
    match cli.command {
        Command::Spectrum => commands::spectrum(&cfg, seed, &mut out)?,
        Command::Fit => commands::fit(&cfg, seed, &mut out)?,
        Command::Scan => commands::scan(&cfg, seed, &mut out)?,
        Command::Deconvolve => commands::deconvolve(&cfg, seed, &mut out)?,
        Command::G2 => commands::g2(&cfg, seed, &mut out)?,
        Command::Spin => commands::spin(&cfg, &mut out)?,
    }
    out.finish(cli.command.name(), seed, &cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
