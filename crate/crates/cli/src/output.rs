//! Staged artifact writing.
//!
//! Files are written next to their destination under a temporary name and
//! renamed only once the whole subcommand has succeeded, so a failed run
//! leaves nothing behind. Every artifact gets a `<name>.json` sidecar with
//! the resolved configuration.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::CliError;

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Serialize)]
struct Sidecar<'a> {
    artifact: &'a str,
    subcommand: &'a str,
    version: &'a str,
    seed: u64,
    config: &'a ExperimentConfig,
}

pub struct Artifacts<'a> {
    dir: PathBuf,
    subcommand: &'a str,
    config: &'a ExperimentConfig,
    staged: Vec<(PathBuf, PathBuf)>,
    committed: bool,
}

impl<'a> Artifacts<'a> {
    pub fn new(subcommand: &'a str, config: &'a ExperimentConfig) -> Result<Self, CliError> {
        let dir = config.output_dir.clone();
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        Ok(Self {
            dir,
            subcommand,
            config,
            staged: Vec::new(),
            committed: false,
        })
    }

    fn stage_raw(&mut self, name: &str, write: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<(), CliError> {
        let target = self.dir.join(name);
        let tmp = self.dir.join(format!(".{name}.partial"));
        // Track before writing so a failed write is still cleaned up.
        self.staged.push((tmp.clone(), target));
        let file = fs::File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
        let mut out = BufWriter::new(file);
        write(&mut out)
            .and_then(|_| out.flush())
            .map_err(|e| CliError::io(&tmp, e))
    }

    /// Stage `name` and its sidecar.
    pub fn write(&mut self, name: &str, write: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<(), CliError> {
        self.stage_raw(name, write)?;
        let sidecar = Sidecar {
            artifact: name,
            subcommand: self.subcommand,
            version: ARTIFACT_VERSION,
            seed: self.config.base_seed,
            config: self.config,
        };
        let json = serde_json::to_string_pretty(&sidecar).map_err(|e| CliError::Runtime(e.to_string()))?;
        self.stage_raw(&format!("{name}.json"), |w| writeln!(w, "{json}"))
    }

    /// Move every staged file into place.
    pub fn commit(mut self) -> Result<Vec<PathBuf>, CliError> {
        let mut done = Vec::new();
        for (tmp, target) in &self.staged {
            if let Err(e) = fs::rename(tmp, target) {
                for p in &done {
                    let _ = fs::remove_file(p);
                }
                return Err(CliError::io(target, e));
            }
            done.push(target.clone());
        }
        self.committed = true;
        Ok(done)
    }
}

impl Drop for Artifacts<'_> {
    fn drop(&mut self) {
        if !self.committed {
            for (tmp, _) in &self.staged {
                let _ = fs::remove_file(tmp);
            }
        }
    }
}
