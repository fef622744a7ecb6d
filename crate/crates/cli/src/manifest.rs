//! Run manifest: which stages ran, what they produced, and the checksums
//! that make reruns verifiable and resumable.
//!
//! The manifest file itself must be bit-identical across deterministic
//! reruns, so volatile wall-clock timings are serialized to a sibling
//! `timings.json` instead of the manifest document.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TIMINGS_FILE: &str = "timings.json";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct ArtifactRecord {
    /// Path relative to the run directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct StageRecord {
    pub name: String,
    pub outputs: Vec<ArtifactRecord>,
    /// Wall time of the most recent execution; written to the timings file,
    /// never to the manifest, so manifests stay deterministic.
    #[serde(skip)]
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_hash: String,
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    pub fn new(config_hash: String) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash,
            stages: Vec::new(),
        }
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }

    /// Appends or replaces the record for `name`, keeping stage order.
    pub fn record_stage(&mut self, record: StageRecord) {
        if let Some(existing) = self.stages.iter_mut().find(|s| s.name == record.name) {
            *existing = record;
        } else {
            self.stages.push(record);
        }
    }

    /// All artifacts across stages keyed by relative path.
    pub fn artifacts(&self) -> BTreeMap<&str, &str> {
        self.stages
            .iter()
            .flat_map(|s| s.outputs.iter())
            .map(|a| (a.path.as_str(), a.sha256.as_str()))
            .collect()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::stage("manifest", e))?;
        fs::write(dir.join(MANIFEST_FILE), text).map_err(|e| CliError::stage("manifest", e))?;
        let timings: BTreeMap<&str, u64> = self
            .stages
            .iter()
            .map(|s| (s.name.as_str(), s.wall_ms))
            .collect();
        let text = serde_json::to_string_pretty(&timings)
            .map_err(|e| CliError::stage("manifest", e))?;
        fs::write(dir.join(TIMINGS_FILE), text).map_err(|e| CliError::stage("manifest", e))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path)
            .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(CliError::validation)
    }

    /// True when every output of the named stage exists on disk with the
    /// recorded checksum, meaning the stage can be skipped on resume.
    pub fn stage_is_intact(&self, name: &str, dir: &Path) -> bool {
        match self.stage(name) {
            None => false,
            Some(record) => record.outputs.iter().all(|artifact| {
                file_sha256(&dir.join(&artifact.path))
                    .map(|h| h == artifact.sha256)
                    .unwrap_or(false)
            }),
        }
    }
}

/// Streaming SHA-256 of a file, hex encoded.
pub fn file_sha256(path: &Path) -> Result<String> {
    let mut file = fs::File::open(path)
        .map_err(|e| CliError::stage("checksum", format!("{}: {e}", path.display())))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let read = file
            .read(&mut buf)
            .map_err(|e| CliError::stage("checksum", format!("{}: {e}", path.display())))?;
        if read == 0 {
            break;
        }
        hasher.update(&buf[..read]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Builds the artifact record for a freshly written output.
pub fn artifact(dir: &Path, relative: &str) -> Result<ArtifactRecord> {
    Ok(ArtifactRecord {
        path: relative.to_string(),
        sha256: file_sha256(&dir.join(relative))?,
    })
}
