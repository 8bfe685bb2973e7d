use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

pub fn digest(path: &Path) -> Result<FileDigest> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(FileDigest {
        path: path.to_path_buf(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

/// Record of one CLI run: resolved configuration, input and output hashes.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: &'static str,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub started_unix_seconds: u64,
    pub wall_seconds: f64,
}

pub struct ManifestBuilder {
    command: String,
    config: serde_json::Value,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    started: SystemTime,
    clock: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str, config: impl Serialize) -> Result<Self> {
        Ok(ManifestBuilder {
            command: command.to_string(),
            config: serde_json::to_value(config)?,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: SystemTime::now(),
            clock: Instant::now(),
        })
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// Hashes every listed file and writes the manifest to `path`.
    pub fn write(self, path: &Path) -> Result<()> {
        let manifest = RunManifest {
            command: self.command,
            tool_version: env!("CARGO_PKG_VERSION"),
            config: self.config,
            inputs: self.inputs.iter().map(|p| digest(p)).collect::<Result<_>>()?,
            outputs: self.outputs.iter().map(|p| digest(p)).collect::<Result<_>>()?,
            started_unix_seconds: self
                .started
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            wall_seconds: self.clock.elapsed().as_secs_f64(),
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }
}

/// `<output>.manifest.json` next to the primary output.
pub fn default_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    output.with_file_name(name)
}
