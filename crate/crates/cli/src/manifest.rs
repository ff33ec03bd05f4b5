use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct InputHash {
    pub path: String,
    pub sha256: String,
}

/// Record of one invocation: what ran, with which settings and inputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub inputs: Vec<InputHash>,
    /// Hash over the command, the resolved settings and the input hashes.
    pub content_hash: String,
    pub timestamp: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub results: Option<serde_json::Value>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn new(command: &str, config: BTreeMap<String, String>, seed: Option<u64>, inputs: Vec<InputHash>) -> Self {
        let mut h = Sha256::new();
        h.update(command.as_bytes());
        for (k, v) in &config {
            h.update(format!("\n{k}={v}").as_bytes());
        }
        for i in &inputs {
            h.update(format!("\n{}", i.sha256).as_bytes());
        }
        Self {
            command: command.into(),
            config,
            seed,
            inputs,
            content_hash: hex::encode(h.finalize()),
            timestamp: chrono::Utc::now().to_rfc3339(),
            results: None,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").with_context(|| format!("writing manifest {}", path.display()))
    }
}

/// `<out>.manifest.json` next to an output file, else a file named after
/// the command in the working directory.
pub fn default_path(out: Option<&Path>, command: &str) -> PathBuf {
    match out {
        Some(p) => {
            let mut s = p.as_os_str().to_owned();
            s.push(".manifest.json");
            PathBuf::from(s)
        }
        None => PathBuf::from(format!("fairmle-{command}.manifest.json")),
    }
}
