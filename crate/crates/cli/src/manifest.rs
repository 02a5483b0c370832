use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Record of one command invocation, written next to its primary output as
/// `<output>.manifest.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: BTreeMap<String, PathBuf>,
    pub outputs: BTreeMap<String, PathBuf>,
    /// SHA-256 of every output file (directories are walked).
    pub artifact_hashes: BTreeMap<PathBuf, String>,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

impl RunManifest {
    pub fn new(command: &str, config: impl Serialize, seed: Option<u64>) -> Result<Self> {
        Ok(Self {
            command: command.to_owned(),
            config: serde_json::to_value(config)?,
            seed,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            artifact_hashes: BTreeMap::new(),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        })
    }

    pub fn input(mut self, name: &str, path: &Path) -> Self {
        self.inputs.insert(name.to_owned(), path.to_owned());
        self
    }

    pub fn output(mut self, name: &str, path: &Path) -> Self {
        self.outputs.insert(name.to_owned(), path.to_owned());
        self
    }

    /// Hashes the outputs and writes the manifest beside `primary`.
    pub fn write(mut self, primary: &Path) -> Result<PathBuf> {
        for path in self.outputs.values() {
            hash_tree(path, &mut self.artifact_hashes)?;
        }
        let path = manifest_path(primary);
        let json = serde_json::to_string_pretty(&self)?;
        std::fs::write(&path, json + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

pub fn manifest_path(primary: &Path) -> PathBuf {
    let mut name = primary.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    primary.with_file_name(name)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn hash_tree(path: &Path, out: &mut BTreeMap<PathBuf, String>) -> Result<()> {
    if path.is_dir() {
        let mut entries = std::fs::read_dir(path)
            .with_context(|| format!("listing {}", path.display()))?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<Vec<_>>>()?;
        entries.sort();
        for e in entries {
            hash_tree(&e, out)?;
        }
    } else if path.is_file() {
        out.insert(path.to_owned(), sha256_file(path)?);
    }
    Ok(())
}
