//! Run manifests: what a command produced, from which configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, Clone)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub code_version: String,
    pub seed: u64,
    pub timings: Vec<(String, f64)>,
    pub outputs: Vec<PathBuf>,
    pub notes: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, resolved_config: &BTreeMap<String, String>, seed: u64) -> Self {
        RunManifest {
            command: command.to_string(),
            config_hash: hash_config(resolved_config),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            timings: Vec::new(),
            outputs: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn add_output(&mut self, path: impl Into<PathBuf>) {
        self.outputs.push(path.into());
    }

    pub fn add_outputs(&mut self, paths: impl IntoIterator<Item = PathBuf>) {
        self.outputs.extend(paths);
    }

    pub fn note(&mut self, message: impl Into<String>) {
        self.notes.push(message.into());
    }

    /// Runs a stage closure and records its wall time.
    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let value = f()?;
        self.timings
            .push((name.to_string(), start.elapsed().as_secs_f64()));
        Ok(value)
    }

    /// Writes `manifest.txt` in `dir` and returns its path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let mut text = String::new();
        text.push_str(&format!("command = {}\n", self.command));
        text.push_str(&format!("config_hash = {}\n", self.config_hash));
        text.push_str(&format!("code_version = {}\n", self.code_version));
        text.push_str(&format!("seed = {}\n", self.seed));
        for (stage, seconds) in &self.timings {
            text.push_str(&format!("timing.{stage} = {seconds:.3}\n"));
        }
        for note in &self.notes {
            text.push_str(&format!("note = {note}\n"));
        }
        for output in &self.outputs {
            text.push_str(&format!("output = {}\n", output.display()));
        }
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

/// Stable digest over the resolved configuration.
pub fn hash_config(resolved: &BTreeMap<String, String>) -> String {
    let mut hasher = Sha256::new();
    for (key, value) in resolved {
        hasher.update(key.as_bytes());
        hasher.update(b"=");
        hasher.update(value.as_bytes());
        hasher.update(b"\n");
    }
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Parses the `output = ...` lines back out of a written manifest.
pub fn read_manifest_outputs(path: &Path) -> Result<Vec<PathBuf>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .filter_map(|l| l.strip_prefix("output = "))
        .map(PathBuf::from)
        .collect())
}
