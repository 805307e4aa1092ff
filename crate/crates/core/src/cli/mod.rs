//! Config-driven experiment runner used by the `lsa-lab` binary.
//!
//! Exit codes: 0 on success, 2 when a checked invariant fails, 3 for configuration
//! errors and 1 for I/O or numerical failures.

pub mod config;
pub mod experiments;

pub use config::{load, load_str, ConfigError, ExperimentConfig, ExperimentKind, LoadedConfig, Overrides};

use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("i/o error at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("computation failed: {0}")]
    Compute(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 3,
            CliError::Io { .. } | CliError::Compute(_) => 1,
        }
    }
}

/// Result of one experiment before anything is written.
#[derive(Debug, Default, Clone)]
pub struct RunOutcome {
    pub summary: String,
    /// `(file name, contents)` pairs written into the output directory.
    pub files: Vec<(String, String)>,
    /// Violated invariants; any entry turns the exit code into 2.
    pub failures: Vec<String>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() {
            0
        } else {
            2
        }
    }

    /// Writes every file plus `summary.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
        let mut summary = self.summary.clone();
        for f in &self.failures {
            summary.push_str(&format!("FAILED: {f}\n"));
        }
        let mut written = Vec::new();
        for (name, text) in self.files.iter().map(|(n, t)| (n.as_str(), t)).chain([("summary.txt", &summary)]) {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|source| CliError::Io { path: path.clone(), source })?;
            written.push(path);
        }
        Ok(written)
    }
}

/// Loads, validates and runs a configuration, writing its outputs.
pub fn run(config_path: &Path, overrides: &Overrides) -> Result<(LoadedConfig, RunOutcome), CliError> {
    let cfg = load(config_path, overrides)?;
    let outcome = experiments::dispatch(&cfg)?;
    let dir = cfg.resolve_out();
    outcome.write(&dir)?;
    Ok((cfg, outcome))
}

impl LoadedConfig {
    /// Output directory; relative paths are taken from the working directory.
    pub fn resolve_out(&self) -> PathBuf {
        self.config.out.clone()
    }
}
