//! Run manifests: parameters, input and output digests, and a result summary.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::output::digest_file;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub converged: bool,
    pub iterations: usize,
    pub final_cost: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub average_rmse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub average_delta_e00: Option<f64>,
    /// Per-primary RMSE against the anchor-normalized true SPDs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub primary_rmse: Option<[f64; 3]>,
}

/// Wall-clock bounds of the run in Unix seconds. `SOURCE_DATE_EPOCH`, when
/// set, replaces both so that manifests are reproducible byte for byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timestamps {
    pub started_unix: u64,
    pub finished_unix: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub parameters: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub result: Option<RunSummary>,
    pub timestamps: Timestamps,
}

pub fn now_unix() -> u64 {
    if let Some(epoch) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|v| v.trim().parse().ok()) {
        return epoch;
    }
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub fn digest_inputs<'a>(paths: impl IntoIterator<Item = &'a Path>) -> Result<Vec<FileDigest>> {
    paths
        .into_iter()
        .map(|p| {
            Ok(FileDigest {
                path: p.display().to_string(),
                sha256: digest_file(p)?,
            })
        })
        .collect()
}

impl RunManifest {
    pub fn new(command: &str, seed: Option<u64>, parameters: serde_json::Value, started_unix: u64) -> Self {
        Self {
            tool: "projspec".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            parameters,
            inputs: Vec::new(),
            outputs: Vec::new(),
            result: None,
            timestamps: Timestamps {
                started_unix,
                finished_unix: started_unix,
            },
        }
    }

    pub fn write(&mut self, path: &Path) -> Result<()> {
        self.timestamps.finished_unix = now_unix();
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => CliError::MissingInput(path.to_path_buf()),
            _ => CliError::io(format!("reading {}", path.display()), e),
        })?;
        Ok(serde_json::from_str(&text)?)
    }
}
