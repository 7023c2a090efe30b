//! Run manifests: every CLI invocation records its resolved inputs,
//! seed, timings, and outputs to a JSON sidecar so runs can be reproduced.

use crate::error::{FspnError, Result};
use crate::learning::LearnConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<LearnConfig>,
    pub inputs: Vec<InputRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub outputs: Vec<String>,
    pub wall_clock_ms: f64,
}

impl RunManifest {
    pub fn new(subcommand: &str) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            config: None,
            inputs: Vec::new(),
            seed: None,
            outputs: Vec::new(),
            wall_clock_ms: 0.0,
        }
    }

    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path).map_err(|e| FspnError::io(path, e))?;
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        self.inputs.push(InputRecord {
            path: path.display().to_string(),
            sha256: format!("{:x}", hasher.finalize()),
        });
        Ok(())
    }

    pub fn record_output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| FspnError::Data(format!("manifest serialization failed: {e}")))?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| FspnError::io(path, e))
    }
}

/// Default manifest location: next to the primary output when one exists,
/// otherwise `fspn-manifest.json` in the working directory.
pub fn default_manifest_path(out: Option<&Path>) -> PathBuf {
    match out {
        Some(p) => {
            let mut name = p.file_name().unwrap_or_default().to_os_string();
            name.push(".manifest.json");
            p.with_file_name(name)
        }
        None => PathBuf::from("fspn-manifest.json"),
    }
}
