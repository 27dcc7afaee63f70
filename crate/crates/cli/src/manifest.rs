//! Provenance record written next to every run's artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub config: Option<FileRecord>,
    /// Effective configuration after flag overrides.
    pub resolved_config: Option<serde_json::Value>,
    pub seed: Option<u64>,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    pub started_at: String,
    pub finished_at: String,
}

pub fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn record(path: &Path) -> anyhow::Result<FileRecord> {
    Ok(FileRecord {
        path: path.display().to_string(),
        sha256: sha256_file(path)?,
    })
}

pub struct ManifestBuilder {
    command: String,
    config: Option<PathBuf>,
    resolved_config: Option<serde_json::Value>,
    seed: Option<u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    started_at: String,
}

impl ManifestBuilder {
    pub fn start(command: &str) -> Self {
        ManifestBuilder {
            command: command.to_string(),
            config: None,
            resolved_config: None,
            seed: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started_at: now(),
        }
    }

    pub fn config(&mut self, path: Option<&Path>, resolved: impl Serialize) -> anyhow::Result<&mut Self> {
        self.config = path.map(Path::to_path_buf);
        self.resolved_config = Some(serde_json::to_value(resolved)?);
        Ok(self)
    }

    pub fn seed(&mut self, seed: u64) -> &mut Self {
        self.seed = Some(seed);
        self
    }

    pub fn input(&mut self, path: &Path) -> &mut Self {
        self.inputs.push(path.to_path_buf());
        self
    }

    pub fn output(&mut self, path: &Path) -> &mut Self {
        self.outputs.push(path.to_path_buf());
        self
    }

    /// Hashes everything and writes the manifest as pretty JSON.
    pub fn write(&self, path: &Path) -> anyhow::Result<RunManifest> {
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: self.command.clone(),
            config: self.config.as_deref().map(record).transpose()?,
            resolved_config: self.resolved_config.clone(),
            seed: self.seed,
            inputs: self.inputs.iter().map(|p| record(p)).collect::<anyhow::Result<_>>()?,
            outputs: self.outputs.iter().map(|p| record(p)).collect::<anyhow::Result<_>>()?,
            started_at: self.started_at.clone(),
            finished_at: now(),
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(manifest)
    }
}

/// Manifest path for a single-file output: `<file>.manifest.json`.
pub fn sidecar_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    output.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hashes_are_recomputable() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.txt");
        let output = dir.path().join("out.txt");
        fs::write(&input, "abc").unwrap();
        fs::write(&output, "").unwrap();
        let m = ManifestBuilder::start("test")
            .input(&input)
            .output(&output)
            .write(&sidecar_path(&output))
            .unwrap();
        // sha256("abc") and sha256("")
        assert_eq!(m.inputs[0].sha256, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        assert_eq!(m.outputs[0].sha256, "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
        assert!(dir.path().join("out.txt.manifest.json").is_file());
    }
}
