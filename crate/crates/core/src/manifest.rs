//! Run manifests: enough provenance to re-run a command bitwise-identically.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const TOOL_NAME: &str = "shape-currents";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub inputs: Vec<InputRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// `"given"` or the heuristic name.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_source: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub options: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            tool: TOOL_NAME.to_string(),
            version: TOOL_VERSION.to_string(),
            command: command.to_string(),
            inputs: Vec::new(),
            lambda: None,
            lambda_source: None,
            seed: None,
            options: serde_json::Value::Object(Default::default()),
        }
    }

    pub fn with_input(mut self, path: &Path) -> Result<Self> {
        self.inputs.push(InputRecord {
            path: path.display().to_string(),
            sha256: hash_path(path)?,
        });
        Ok(self)
    }

    pub fn with_lambda(mut self, lambda: f64, source: &str) -> Self {
        self.lambda = Some(lambda);
        self.lambda_source = Some(source.to_string());
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_options(mut self, options: serde_json::Value) -> Self {
        self.options = options;
        self
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("manifest serialises")
    }
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// SHA-256 of a file's bytes, or for a directory, of every file's relative
/// path and contents in sorted path order.
pub fn hash_path(path: &Path) -> Result<String> {
    let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
    if meta.is_file() {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        return Ok(hash_bytes(&bytes));
    }
    let mut files = Vec::new();
    collect_files(path, path, &mut files)?;
    files.sort();
    let mut hasher = Sha256::new();
    for rel in files {
        let full = path.join(&rel);
        let bytes = fs::read(&full).map_err(|e| Error::io(&full, e))?;
        hasher.update(rel.as_bytes());
        hasher.update([0u8]);
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            let rel = path.strip_prefix(root).expect("under root");
            out.push(rel.to_string_lossy().replace('\\', "/"));
        }
    }
    Ok(())
}
