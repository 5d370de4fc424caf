//! Artifact collector: CSVs with a `#` provenance header and one JSON manifest per run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::json;

use crate::config::Config;
use crate::error::CliError;

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_NAME: &str = "manifest.json";

/// One pass/fail line for `--check`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }
}

pub struct Output {
    dir: PathBuf,
    command: String,
    config: Config,
    config_line: String,
    files: Vec<String>,
    seeds: BTreeMap<String, u64>,
    tolerances: BTreeMap<String, f64>,
}

impl Output {
    pub fn new(dir: &Path, command: &str, config: &Config) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)?;
        let mut seeds = BTreeMap::new();
        seeds.insert("master".to_string(), config.seed);
        Ok(Self {
            dir: dir.to_path_buf(),
            command: command.to_string(),
            config: config.clone(),
            config_line: serde_json::to_string(config)?,
            files: Vec::new(),
            seeds,
            tolerances: BTreeMap::new(),
        })
    }

    pub fn seed(&mut self, name: impl Into<String>, seed: u64) {
        self.seeds.insert(name.into(), seed);
    }

    pub fn tolerance(&mut self, name: impl Into<String>, value: f64) {
        self.tolerances.insert(name.into(), value);
    }

    /// Writes `name` as the provenance header followed by whatever `body` emits.
    pub fn csv<F>(&mut self, name: &str, body: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut Vec<u8>) -> Result<(), CliError>,
    {
        let mut buf = format!("# nuflavor {} {}\n# seed: {}\n# config: {}\n", self.command, env!("CARGO_PKG_VERSION"), self.config.seed, self.config_line)
            .into_bytes();
        body(&mut buf)?;
        std::fs::write(self.dir.join(name), buf)?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Writes the manifest and returns its path.
    pub fn finish(self, checks: &[Check]) -> Result<PathBuf, CliError> {
        let manifest = json!({
            "manifest_version": MANIFEST_VERSION,
            "tool": "nuflavor",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "config": self.config,
            "seeds": self.seeds,
            "tolerances": self.tolerances,
            "outputs": self.files,
            "checks": checks,
            "timestamp": timestamp(),
        });
        let path = self.dir.join(MANIFEST_NAME);
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        std::fs::write(&path, text)?;
        Ok(path)
    }
}

/// Seconds since the epoch; `SOURCE_DATE_EPOCH` pins it for reproducible manifests.
fn timestamp() -> u64 {
    if let Some(t) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|v| v.parse().ok()) {
        return t;
    }
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}
