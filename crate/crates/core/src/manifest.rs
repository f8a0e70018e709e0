//! Content hashes of run artifacts, recorded per pipeline stage.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> std::io::Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

/// Order-sensitive hash of labelled parts.
#[derive(Default)]
pub struct Fingerprint(Sha256);

impl Fingerprint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, label: &str, value: &[u8]) -> &mut Self {
        for part in [label.as_bytes(), value] {
            self.0.update((part.len() as u64).to_le_bytes());
            self.0.update(part);
        }
        self
    }

    pub fn finish(&self) -> String {
        hex::encode(self.0.clone().finalize())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    /// Fingerprint of everything the stage read.
    pub inputs: String,
    /// Output path relative to the run directory → content hash.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub config_hash: String,
    pub stages: BTreeMap<String, StageRecord>,
}

impl Manifest {
    pub fn load(dir: &Path) -> std::io::Result<Option<Manifest>> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path)?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }

    pub fn save(&self, dir: &Path) -> std::io::Result<bool> {
        write_if_changed(&dir.join(MANIFEST_FILE), self.to_json().as_bytes())
    }

    /// True when `stage` was completed from the same inputs and every
    /// recorded output still has its recorded content.
    pub fn is_current(&self, stage: &str, inputs: &str, dir: &Path) -> bool {
        let Some(rec) = self.stages.get(stage) else {
            return false;
        };
        rec.inputs == inputs
            && rec.outputs.iter().all(|(rel, hash)| hash_file(&dir.join(rel)).is_ok_and(|h| &h == hash))
    }

    pub fn record(&mut self, stage: &str, inputs: String, outputs: BTreeMap<String, String>) {
        self.stages.insert(stage.to_string(), StageRecord { inputs, outputs });
    }
}

/// Writes `bytes` unless the file already holds exactly them. Returns
/// whether anything was written.
pub fn write_if_changed(path: &Path, bytes: &[u8]) -> std::io::Result<bool> {
    if std::fs::read(path).is_ok_and(|old| old == bytes) {
        return Ok(false);
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, bytes)?;
    Ok(true)
}
