use std::path::{Path, PathBuf};

use dnbcure::OptimizerConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::Invocation;

/// Record written next to every output. `invocation` is enough to rerun the
/// command; `resolved` spells out every default that was applied.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub invocation: Invocation,
    pub resolved: Resolved,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub wall_time_secs: f64,
    /// Command-specific extras, e.g. per-replicate dataset hashes.
    #[serde(default)]
    pub details: serde_json::Value,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Resolved {
    pub seed: u64,
    pub threads: usize,
    pub optimizer: OptimizerConfig,
}

/// `out.csv` -> `out.manifest.json`.
pub fn manifest_path(output: &Path) -> PathBuf {
    output.with_extension("manifest.json")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}
