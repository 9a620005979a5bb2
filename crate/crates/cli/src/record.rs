//! Run records: the config echo, a summary and a hashed manifest of every
//! file a command wrote.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, FORMAT};
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the record's directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub format: String,
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    pub wall_clock_seconds: f64,
    pub summary: serde_json::Value,
    pub files: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects the files of one record directory.
pub struct Output {
    dir: PathBuf,
    files: Vec<FileEntry>,
    started: Instant,
}

impl Output {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)?;
        Ok(Output { dir: dir.to_path_buf(), files: Vec::new(), started: Instant::now() })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, contents)?;
        self.files.push(FileEntry {
            path: name.to_string(),
            sha256: sha256_hex(contents.as_bytes()),
            bytes: contents.len() as u64,
        });
        Ok(())
    }

    /// Write `record.json` and return the record.
    pub fn finish<C: Serialize>(
        self,
        config: &ExperimentConfig<C>,
        summary: serde_json::Value,
    ) -> Result<RunRecord, CliError> {
        let record = RunRecord {
            format: FORMAT.to_string(),
            command: config.command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: serde_json::to_value(config).expect("config serializes"),
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            summary,
            files: self.files,
        };
        let text = serde_json::to_string_pretty(&record).expect("record serializes");
        std::fs::write(self.dir.join("record.json"), text + "\n")?;
        Ok(record)
    }
}

/// Files whose contents no longer match the manifest of `record_path`.
pub fn verify(record_path: &Path) -> Result<Vec<String>, CliError> {
    let text = std::fs::read_to_string(record_path)?;
    let record: RunRecord = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", record_path.display())))?;
    let dir = record_path.parent().unwrap_or(Path::new("."));
    let mut bad = Vec::new();
    for f in &record.files {
        match std::fs::read(dir.join(&f.path)) {
            Ok(bytes) if sha256_hex(&bytes) == f.sha256 => {}
            _ => bad.push(f.path.clone()),
        }
    }
    Ok(bad)
}
