//! Append-only, line-delimited JSON log of submitted rounds.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub annotator: String,
    pub cluster: u32,
    pub round: usize,
    pub checked: Vec<String>,
    pub ts: String,
}

pub struct RoundLog {
    path: PathBuf,
    file: File,
}

impl RoundLog {
    /// Opens (creating if needed) the log and returns every complete record.
    /// A torn final line, left by a write that was never acknowledged, is cut
    /// off.
    pub fn open(path: &Path) -> Result<(Self, Vec<RoundRecord>), ServiceError> {
        let err = |e: std::io::Error| ServiceError::Log(format!("{}: {e}", path.display()));
        let bytes = match std::fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(err(e)),
        };
        let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
        let text = std::str::from_utf8(&bytes[..complete]).map_err(|e| ServiceError::Log(format!("{}: {e}", path.display())))?;
        let mut records = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: RoundRecord = serde_json::from_str(line)
                .map_err(|e| ServiceError::Log(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
            records.push(rec);
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(err)?;
        if complete < bytes.len() {
            tracing::warn!(path = %path.display(), "dropping torn final log line");
            file.set_len(complete as u64).map_err(err)?;
        }
        Ok((RoundLog { path: path.to_path_buf(), file }, records))
    }

    /// Appends one record and syncs it to disk.
    pub fn append(&mut self, rec: &RoundRecord) -> Result<(), ServiceError> {
        let mut line = serde_json::to_string(rec).map_err(|e| ServiceError::Log(e.to_string()))?;
        line.push('\n');
        let err = |e: std::io::Error| ServiceError::Log(format!("{}: {e}", self.path.display()));
        self.file.write_all(line.as_bytes()).map_err(err)?;
        self.file.sync_data().map_err(err)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}
