//! `manifest.json`: what each pipeline stage read and wrote, with digests.
//! Wall-clock times sit in their own block so the rest is reproducible.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Digest of a serializable stage configuration (canonical JSON).
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let value = serde_json::to_value(config)?;
    Ok(sha256_hex(serde_json::to_string(&value)?.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub config_hash: String,
    pub seed: u64,
    /// Path relative to the run directory -> sha256.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageTimes {
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub stages: Vec<StageRecord>,
    pub timestamps: BTreeMap<String, StageTimes>,
}

pub fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis())
}

fn digests(root: &Path, files: &[PathBuf]) -> Result<BTreeMap<String, String>> {
    files
        .iter()
        .map(|f| {
            let full = if f.is_absolute() {
                f.clone()
            } else {
                root.join(f)
            };
            let key = full
                .strip_prefix(root)
                .unwrap_or(&full)
                .to_string_lossy()
                .replace('\\', "/");
            Ok((key, file_digest(&full)?))
        })
        .collect()
}

impl RunManifest {
    pub fn load_or_default(dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Self::default());
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let path = dir.as_ref().join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    /// Records a finished stage, replacing an earlier record of the same name.
    #[allow(clippy::too_many_arguments)]
    pub fn record<C: Serialize>(
        &mut self,
        dir: impl AsRef<Path>,
        name: &str,
        config: &C,
        seed: u64,
        inputs: &[PathBuf],
        outputs: &[PathBuf],
        started_unix_ms: u128,
    ) -> Result<()> {
        let dir = dir.as_ref();
        let record = StageRecord {
            name: name.to_string(),
            config_hash: config_hash(config)?,
            seed,
            inputs: digests(dir, inputs)?,
            outputs: digests(dir, outputs)?,
        };
        self.stages.retain(|s| s.name != name);
        self.stages.push(record);
        self.timestamps.insert(
            name.to_string(),
            StageTimes {
                started_unix_ms,
                finished_unix_ms: now_ms(),
            },
        );
        Ok(())
    }

    /// Files whose current digest differs from the recorded one.
    pub fn verify(&self, dir: impl AsRef<Path>) -> Result<Vec<String>> {
        let dir = dir.as_ref();
        let mut stale = Vec::new();
        for stage in &self.stages {
            for (file, digest) in stage.inputs.iter().chain(&stage.outputs) {
                let path = dir.join(file);
                if !path.exists() || file_digest(&path)? != *digest {
                    stale.push(file.clone());
                }
            }
        }
        stale.sort();
        stale.dedup();
        Ok(stale)
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn record_verify_and_reload() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("in.txt"), "a").unwrap();
        std::fs::write(dir.path().join("out.txt"), "b").unwrap();
        let mut m = RunManifest::default();
        m.record(
            dir.path(),
            "stage",
            &("cfg", 1),
            7,
            &["in.txt".into()],
            &["out.txt".into()],
            now_ms(),
        )
        .unwrap();
        m.save(dir.path()).unwrap();
        let back = RunManifest::load_or_default(dir.path()).unwrap();
        assert_eq!(back, m);
        assert!(back.verify(dir.path()).unwrap().is_empty());
        std::fs::write(dir.path().join("out.txt"), "c").unwrap();
        assert_eq!(
            back.verify(dir.path()).unwrap(),
            vec!["out.txt".to_string()]
        );
        assert_eq!(back.stage("stage").unwrap().seed, 7);
    }

    #[test]
    fn rerecording_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = RunManifest::default();
        m.record(dir.path(), "s", &1, 0, &[], &[], 0).unwrap();
        m.record(dir.path(), "s", &2, 0, &[], &[], 0).unwrap();
        assert_eq!(m.stages.len(), 1);
        assert_eq!(m.stages[0].config_hash, config_hash(&2).unwrap());
    }
}
