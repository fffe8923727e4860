//! Experiment runner: configuration, seeding, orchestration and artifact
//! emission for the `hmimo` binary.

pub mod commands;
pub mod config;
pub mod output;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use config::ExperimentConfig;
use output::Artifacts;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] hmimo_core::error::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "hmimo", version, about = "Wavenumber-domain holographic MIMO experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Subcommand, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Dump the wavenumber lattice.
    Lattice,
    /// Averaged DFT/FH power spectra and per-trial n95 support sizes.
    Spectrum,
    /// NMSE sweep of the sparse estimators over SNR.
    Estimate,
    /// Rate-versus-distance sweep of the basis codebooks.
    Codebook,
    /// Check basis and lattice invariants on the configured geometry.
    Validate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Lattice => "lattice",
            Command::Spectrum => "spectrum",
            Command::Estimate => "estimate",
            Command::Codebook => "codebook",
            Command::Validate => "validate",
        }
    }
}

#[derive(Debug, Args, Clone, Default)]
pub struct CommonArgs {
    /// Config file (TOML, or a JSON artifact sidecar).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a config value, e.g. `--set geometry.n_x=64`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Trial count for every experiment.
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

impl CommonArgs {
    /// Resolve the configuration: file, then `--set`, then dedicated flags.
    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut overrides = self.overrides.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("base_seed={seed}"));
        }
        if let Some(t) = self.trials {
            overrides.push(format!("trials={t}"));
            overrides.push(format!("codebook.trials={t}"));
        }
        let mut config = config::load(self.config.as_deref(), &overrides)?;
        if let Some(out) = &self.out {
            config.output_dir = out.clone();
        }
        Ok(config)
    }
}

/// Run one subcommand; returns the written artifact paths.
pub fn run(command: Command, common: &CommonArgs) -> Result<Vec<PathBuf>, CliError> {
    let config = common.resolve()?;
    if common.threads == Some(0) {
        return Err(CliError::Config("--threads must be positive".into()));
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = common.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Runtime(e.to_string()))?;
    pool.install(|| {
        let mut out = Artifacts::new(command.name(), &config)?;
        let mut failed = 0;
        match command {
            Command::Lattice => commands::lattice(&config, &mut out)?,
            Command::Spectrum => commands::spectrum(&config, &mut out)?,
            Command::Estimate => commands::estimate(&config, &mut out)?,
            Command::Codebook => commands::codebook(&config, &mut out)?,
            Command::Validate => failed = commands::validate(&config, &mut out)?,
        }
        let written = out.commit()?;
        if failed > 0 {
            return Err(CliError::Runtime(format!("{failed} invariant check(s) failed")));
        }
        Ok(written)
    })
}
