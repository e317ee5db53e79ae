use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{GatewayError, RawResponse, RequestKey};

/// File-per-key response store.
///
/// Layout: `<root>/<level>/<image_digest>/<prompt_digest>.<replicate>` holds
/// the response bytes, with a `.meta.json` sidecar. The text file is the
/// commit point and is never overwritten once present.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    root: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    received_at: DateTime<Utc>,
    backend: String,
    attempt_count: u32,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> GatewayError + '_ {
    move |source| GatewayError::Io {
        path: path.to_owned(),
        source,
    }
}

impl ResponseCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ResponseCache { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, key: &RequestKey) -> PathBuf {
        self.root
            .join(key.level.to_string())
            .join(&key.image_digest)
            .join(format!("{}.{}", key.prompt_digest, key.replicate))
    }

    fn meta_path(text_path: &Path) -> PathBuf {
        let mut s = text_path.as_os_str().to_owned();
        s.push(".meta.json");
        PathBuf::from(s)
    }

    pub fn get(&self, key: &RequestKey) -> Result<Option<RawResponse>, GatewayError> {
        let path = self.path_for(key);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(io_err(&path)(e)),
        };
        let text = String::from_utf8(bytes)
            .map_err(|e| io_err(&path)(io::Error::new(io::ErrorKind::InvalidData, e)))?;
        let meta_path = Self::meta_path(&path);
        let meta = match fs::read_to_string(&meta_path) {
            Ok(s) => serde_json::from_str::<Meta>(&s)
                .map_err(|e| io_err(&meta_path)(io::Error::new(io::ErrorKind::InvalidData, e)))?,
            // committed text without a sidecar: the writer stopped in between
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                let modified = fs::metadata(&path)
                    .and_then(|m| m.modified())
                    .map_err(io_err(&path))?;
                Meta {
                    received_at: modified.into(),
                    backend: "unknown".into(),
                    attempt_count: 0,
                }
            }
            Err(e) => return Err(io_err(&meta_path)(e)),
        };
        Ok(Some(RawResponse {
            key: key.clone(),
            text,
            received_at: meta.received_at,
            backend: meta.backend,
            attempt_count: meta.attempt_count,
        }))
    }

    /// Stores `response` unless the key is already present; returns
    /// whichever response ends up in the cache.
    pub fn put(&self, response: &RawResponse) -> Result<RawResponse, GatewayError> {
        let path = self.path_for(&response.key);
        if !write_noclobber(&path, response.text.as_bytes())? {
            return Ok(self.get(&response.key)?.expect("existing cache entry"));
        }
        let meta = Meta {
            received_at: response.received_at,
            backend: response.backend.clone(),
            attempt_count: response.attempt_count,
        };
        let json = serde_json::to_vec_pretty(&meta).expect("meta serializes");
        write_noclobber(&Self::meta_path(&path), &json)?;
        Ok(response.clone())
    }

    /// Keeps a response that failed parsing, outside the cache proper.
    pub fn archive_rejected(&self, response: &RawResponse, ask: u32) -> Result<PathBuf, GatewayError> {
        let dir = self.root.join("rejected");
        for n in 0.. {
            let path = dir.join(format!("{}.{ask}.{n}", response.key.digest()));
            if write_noclobber(&path, response.text.as_bytes())? {
                return Ok(path);
            }
        }
        unreachable!()
    }
}

/// Atomically creates `path` with `bytes`. Returns false if it already exists.
fn write_noclobber(path: &Path, bytes: &[u8]) -> Result<bool, GatewayError> {
    let dir = path.parent().expect("cache paths have a parent");
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    match tmp.persist_noclobber(path) {
        Ok(_) => Ok(true),
        Err(e) if e.error.kind() == io::ErrorKind::AlreadyExists => Ok(false),
        Err(e) => Err(io_err(path)(e.error)),
    }
}
