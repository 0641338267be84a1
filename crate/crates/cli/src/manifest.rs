//! Run manifests: a JSON record of every run, sufficient to replay it.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

pub const MANIFEST_SCHEMA: u32 = 1;
pub const CSV_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub schema: u32,
    pub csv_schema: u32,
    pub command: String,
    /// Arguments after the program name, as given.
    pub args: Vec<String>,
    /// Fully resolved parameters, defaults included.
    pub parameters: serde_json::Value,
    pub seeds: Vec<u64>,
    pub tool_version: String,
    pub wall_clock_seconds: f64,
    /// Directory the run started in; relative arguments resolve against it.
    #[serde(default)]
    pub working_directory: Option<PathBuf>,
    /// Absolute paths of everything the run wrote, manifest excluded.
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").with_context(|| format!("writing manifest {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        let m: Self = serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))?;
        anyhow::ensure!(m.schema == MANIFEST_SCHEMA, "unsupported manifest schema {}", m.schema);
        Ok(m)
    }
}

/// `<output>.manifest.json`.
pub fn default_manifest_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}
