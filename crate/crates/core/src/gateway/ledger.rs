use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{GatewayError, RequestKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LedgerStatus {
    Cached,
    Fetched,
    Failed,
}

/// One line of `ledger.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub seq: u64,
    pub image_id: String,
    pub key: RequestKey,
    pub key_digest: String,
    pub status: LedgerStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub received_at: Option<DateTime<Utc>>,
    pub attempt_count: u32,
    /// SHA-256 of the cached response bytes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_sha256: Option<String>,
    /// Number of unparseable responses discarded before this one.
    #[serde(default)]
    pub reasks: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Append-only JSON-lines log; each line is flushed as it is written.
pub struct Ledger {
    path: PathBuf,
    state: Mutex<(File, u64)>,
}

impl Ledger {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        let path = path.into();
        let io = |source| GatewayError::Io {
            path: path.clone(),
            source,
        };
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        let next = Self::read(&path)?.last().map_or(0, |e| e.seq + 1);
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(io)?;
        // drop a torn final line so new entries start on a line boundary
        let bytes = std::fs::read(&path).map_err(io)?;
        let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        if keep < bytes.len() {
            file.set_len(keep as u64).map_err(io)?;
        }
        Ok(Ledger {
            path,
            state: Mutex::new((file, next)),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Assigns the next sequence number and appends the entry.
    pub fn append(&self, mut entry: LedgerEntry) -> Result<LedgerEntry, GatewayError> {
        let mut state = self.state.lock().unwrap_or_else(|e| e.into_inner());
        entry.seq = state.1;
        let mut line = serde_json::to_string(&entry).expect("ledger entry serializes");
        line.push('\n');
        state
            .0
            .write_all(line.as_bytes())
            .and_then(|()| state.0.flush())
            .map_err(|source| GatewayError::Io {
                path: self.path.clone(),
                source,
            })?;
        state.1 += 1;
        Ok(entry)
    }

    /// All entries in file order; a missing file is an empty ledger. A
    /// truncated final line (interrupted write) is ignored.
    pub fn read(path: &Path) -> Result<Vec<LedgerEntry>, GatewayError> {
        let io = |source| GatewayError::Io {
            path: path.to_owned(),
            source,
        };
        let file = match File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io(e)),
        };
        let lines: Vec<String> = BufReader::new(file).lines().collect::<Result<_, _>>().map_err(io)?;
        let mut entries = Vec::with_capacity(lines.len());
        for (i, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str(line) {
                Ok(e) => entries.push(e),
                Err(_) if i + 1 == lines.len() => break,
                Err(e) => {
                    return Err(io(std::io::Error::new(
                        std::io::ErrorKind::InvalidData,
                        format!("line {}: {e}", i + 1),
                    )))
                }
            }
        }
        Ok(entries)
    }
}
