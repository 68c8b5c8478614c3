use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

/// Provenance record written beside the primary output of every command
/// that produces artifacts.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub wall_clock_secs: f64,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    output.with_file_name(name)
}

pub struct Recorder {
    command: String,
    seed: u64,
    config: serde_json::Value,
    inputs: Vec<FileDigest>,
    started: Instant,
}

impl Recorder {
    pub fn new<C: Serialize>(command: &str, seed: u64, config: &C) -> Result<Self> {
        Ok(Recorder {
            command: command.to_string(),
            seed,
            config: serde_json::to_value(config)?,
            inputs: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn input(&mut self, role: &str, path: &Path) -> Result<()> {
        self.inputs.push(FileDigest { role: role.into(), path: path.into(), sha256: sha256_file(path)? });
        Ok(())
    }

    /// Hashes the outputs and writes the manifest next to the first one.
    pub fn finish(self, outputs: &[(&str, &Path)]) -> Result<RunManifest> {
        let outputs = outputs
            .iter()
            .map(|(role, p)| Ok(FileDigest { role: role.to_string(), path: p.to_path_buf(), sha256: sha256_file(p)? }))
            .collect::<Result<Vec<_>>>()?;
        let manifest = RunManifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION").into(),
            seed: self.seed,
            config: self.config,
            inputs: self.inputs,
            wall_clock_secs: self.started.elapsed().as_secs_f64(),
            outputs,
        };
        if let Some(first) = manifest.outputs.first() {
            let path = manifest_path(&first.path);
            std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)
                .with_context(|| format!("cannot write {}", path.display()))?;
        }
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_of_known_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("abc");
        std::fs::write(&p, b"abc").unwrap();
        assert_eq!(sha256_file(&p).unwrap(), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        assert_eq!(manifest_path(&p), dir.path().join("abc.manifest.json"));
    }
}
