use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};
use sonmf_core::{MetricsRecord, Termination};

use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

impl FileDigest {
    pub fn of_bytes(path: &Path, data: &[u8]) -> Self {
        FileDigest {
            path: path.display().to_string(),
            bytes: data.len() as u64,
            sha256: hex::encode(Sha256::digest(data)),
        }
    }

    pub fn of_file(path: &Path) -> Result<Self, CliError> {
        let data = fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(Self::of_bytes(path, &data))
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TerminationInfo {
    pub reason: Termination,
    pub iterations: usize,
    pub accepted_steps: usize,
}

/// Everything needed to rerun a command and check its outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub version: String,
    /// Fully resolved settings, defaults included.
    pub config: serde_json::Value,
    pub seed: u64,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub metrics: Vec<MetricsRecord>,
    pub termination: Option<TerminationInfo>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
}

pub fn unix_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

/// Output directory that remembers the digest of every file written to it.
pub struct OutDir {
    root: PathBuf,
    written: Vec<FileDigest>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::Io(format!("{}: {e}", root.display())))?;
        Ok(OutDir { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&mut self, name: &str, data: impl AsRef<[u8]>) -> Result<(), CliError> {
        let path = self.path(name);
        fs::write(&path, data.as_ref()).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.written.push(FileDigest::of_bytes(&path, data.as_ref()));
        Ok(())
    }

    /// Writes the manifest last, listing every earlier output.
    pub fn finish(mut self, mut manifest: RunManifest) -> Result<RunManifest, CliError> {
        manifest.outputs = std::mem::take(&mut self.written);
        manifest.finished_unix_ms = unix_ms();
        let json = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
        let path = self.path(MANIFEST_FILE);
        fs::write(&path, json).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(manifest)
    }
}
