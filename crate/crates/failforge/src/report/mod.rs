//! Run manifests and figure emission.
//!
//! Every CLI command that gets past argument parsing writes a manifest
//! recording the resolved configuration, the seed, the tool version, and
//! a content digest for each file it read or wrote.

pub mod chart;
pub mod config_file;

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::digest::hex_digest;
use crate::error::{Error, Result};

pub const MANIFEST_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub command: String,
    pub resolved_config: serde_json::Value,
    pub seed: u64,
    pub tool_version: String,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    pub started_unix_s: u64,
    pub finished_unix_s: u64,
    /// Set when the command failed after parsing; the manifest is still
    /// written so the failure is attributable.
    pub error: Option<String>,
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl RunManifest {
    pub fn new(command: &str, resolved_config: serde_json::Value, seed: u64) -> Self {
        RunManifest {
            format_version: MANIFEST_FORMAT_VERSION,
            command: command.to_string(),
            resolved_config,
            seed,
            tool_version: crate::VERSION.to_string(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            started_unix_s: unix_now(),
            finished_unix_s: 0,
            error: None,
        }
    }

    fn record(path: &Path) -> Result<FileRecord> {
        let bytes = std::fs::read(path)?;
        Ok(FileRecord {
            path: path.display().to_string(),
            digest: hex_digest(&bytes),
        })
    }

    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        let rec = Self::record(path)?;
        self.inputs.push(rec);
        Ok(())
    }

    pub fn record_output(&mut self, path: &Path) -> Result<()> {
        let rec = Self::record(path)?;
        self.outputs.push(rec);
        Ok(())
    }

    /// Stamps the end time and writes the manifest next to the outputs.
    pub fn finish(&mut self, path: &Path) -> Result<()> {
        self.finished_unix_s = unix_now();
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Format(format!("cannot read manifest {}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("malformed manifest {}: {e}", path.display())))?)
    }
}
