//! Dispatches (image, prompt) requests to a multimodal model backend.
//!
//! Every request is a fresh, single-message conversation. Responses are
//! cached on disk under their [`RequestKey`] so campaigns can be resumed and
//! re-analysed offline; the first successful write for a key is permanent.

mod backend;
mod cache;
mod campaign;
mod ledger;

use std::path::PathBuf;
use std::sync::Mutex;
use std::time::Duration;

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::prompt::{ExpertiseLevel, PromptBundle};

pub use backend::{Backend, BackendFailure, BackendRequest, LiveBackend, MockBackend, MockScript};
pub use cache::ResponseCache;
pub use campaign::{
    Campaign, CampaignError, CampaignImage, CampaignOutcome, LevelOrder, DEFAULT_REASKS,
};
pub use ledger::{Ledger, LedgerEntry, LedgerStatus};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("backend unavailable after {attempts} attempts: {last_error}")]
    BackendUnavailable { attempts: u32, last_error: String },
    #[error("backend rejected the request with status {status}: {excerpt}")]
    BackendRejected { status: u16, excerpt: String },
    #[error("mock script has no entry for request {0}")]
    MockScriptMiss(String),
    #[error("empty image")]
    EmptyImage,
    #[error("replicate must be >= 1")]
    InvalidReplicate,
    #[error("invalid backend configuration: {0}")]
    Config(String),
    #[error("cache I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// UTC instant with nanosecond precision.
pub type Timestamp = DateTime<Utc>;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Identifies one cache entry.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RequestKey {
    pub image_digest: String,
    pub prompt_digest: String,
    pub level: ExpertiseLevel,
    pub replicate: u32,
}

impl RequestKey {
    pub fn new(image: &[u8], bundle: &PromptBundle, replicate: u32) -> Self {
        RequestKey {
            image_digest: sha256_hex(image),
            prompt_digest: prompt_digest(bundle),
            level: bundle.level,
            replicate,
        }
    }

    /// Hex digest used as the mock-script key and in the ledger.
    pub fn digest(&self) -> String {
        sha256_hex(
            format!(
                "{}/{}/{}/{}",
                self.image_digest, self.prompt_digest, self.level, self.replicate
            )
            .as_bytes(),
        )
    }
}

pub fn prompt_digest(bundle: &PromptBundle) -> String {
    sha256_hex(bundle.request_text().as_bytes())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawResponse {
    pub key: RequestKey,
    /// Response text exactly as received.
    pub text: String,
    pub received_at: Timestamp,
    pub backend: String,
    pub attempt_count: u32,
}

impl RawResponse {
    #[cfg(test)]
    pub(crate) fn for_test(text: &str, level: ExpertiseLevel) -> Self {
        RawResponse {
            key: RequestKey {
                image_digest: "0".repeat(64),
                prompt_digest: "0".repeat(64),
                level,
                replicate: 1,
            },
            text: text.to_owned(),
            received_at: Utc.timestamp_opt(0, 0).unwrap(),
            backend: "test".into(),
            attempt_count: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Live,
    Mock,
}

fn default_timeout() -> u64 {
    120
}

fn default_retries() -> u32 {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Chat-completion URL (live only).
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model_name: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// Name of the environment variable holding the API key (live only).
    #[serde(default)]
    pub credentials_env: Option<String>,
    /// Mock script path (mock only).
    #[serde(default)]
    pub script: Option<PathBuf>,
    /// Base delay of the exponential backoff, in milliseconds.
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
}

fn default_backoff() -> u64 {
    500
}

impl BackendConfig {
    pub fn mock(script: impl Into<PathBuf>) -> Self {
        BackendConfig {
            kind: BackendKind::Mock,
            endpoint: None,
            model_name: "mock".into(),
            temperature: 0.0,
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
            credentials_env: None,
            script: Some(script.into()),
            backoff_ms: 0,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(GatewayError::Config("temperature must be >= 0".into()));
        }
        match self.kind {
            BackendKind::Mock => {
                if self.script.is_none() {
                    return Err(GatewayError::Config("mock backend requires a script path".into()));
                }
                if self.endpoint.is_some() || self.credentials_env.is_some() {
                    return Err(GatewayError::Config(
                        "mock backend takes a script, not an endpoint or credentials".into(),
                    ));
                }
            }
            BackendKind::Live => {
                if self.endpoint.is_none() {
                    return Err(GatewayError::Config("live backend requires an endpoint".into()));
                }
                if self.model_name.is_empty() {
                    return Err(GatewayError::Config("live backend requires a model name".into()));
                }
            }
        }
        Ok(())
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.max_retries,
            base_delay: Duration::from_millis(self.backoff_ms),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl RetryPolicy {
    /// Delay before retry number `retry` (1-based): `base * 2^(retry-1)`.
    pub fn delay(&self, retry: u32) -> Duration {
        self.base_delay
            .saturating_mul(1u32.checked_shl(retry.saturating_sub(1)).unwrap_or(u32::MAX))
    }
}

static LAST_STAMP: Mutex<i64> = Mutex::new(i64::MIN);

/// Wall-clock timestamp, strictly increasing within the process.
pub(crate) fn stamp() -> Timestamp {
    let now = Utc::now().timestamp_nanos_opt().unwrap_or(i64::MAX);
    let mut last = LAST_STAMP.lock().unwrap_or_else(|e| e.into_inner());
    let t = now.max(last.saturating_add(1));
    *last = t;
    Utc.timestamp_nanos(t)
}

/// Whether a response came from the cache or the backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Cached,
    Fetched,
}

/// Backend plus cache plus retry policy.
pub struct Gateway {
    backend: Box<dyn Backend>,
    cache: ResponseCache,
    retry: RetryPolicy,
}

impl Gateway {
    pub fn new(backend: Box<dyn Backend>, cache: ResponseCache, retry: RetryPolicy) -> Self {
        Gateway {
            backend,
            cache,
            retry,
        }
    }

    /// Builds the backend described by `cfg`.
    pub fn from_config(cfg: &BackendConfig, cache: ResponseCache) -> Result<Self, GatewayError> {
        cfg.validate()?;
        let backend: Box<dyn Backend> = match cfg.kind {
            BackendKind::Mock => {
                let path = cfg.script.as_ref().expect("validated");
                Box::new(MockBackend::load(path)?)
            }
            BackendKind::Live => Box::new(LiveBackend::from_config(cfg)?),
        };
        Ok(Gateway::new(backend, cache, cfg.retry_policy()))
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    /// Returns the cached response for this request, or fetches, stores and
    /// returns a fresh one.
    pub fn submit(
        &self,
        image: &[u8],
        bundle: &PromptBundle,
        replicate: u32,
    ) -> Result<(RawResponse, Origin), GatewayError> {
        self.submit_checked(image, bundle, replicate, 0, |_| true)
            .map(|(r, origin, _)| (r, origin))
    }

    /// Like [`Gateway::submit`], but a fetched response is only cached if
    /// `accept` approves it; rejected responses are archived and the request
    /// is re-asked up to `reasks` more times. Returns the rejected texts
    /// alongside the final response.
    pub fn submit_checked(
        &self,
        image: &[u8],
        bundle: &PromptBundle,
        replicate: u32,
        reasks: u32,
        accept: impl Fn(&RawResponse) -> bool,
    ) -> Result<(RawResponse, Origin, Vec<RawResponse>), GatewayError> {
        if image.is_empty() {
            return Err(GatewayError::EmptyImage);
        }
        if replicate == 0 {
            return Err(GatewayError::InvalidReplicate);
        }
        let key = RequestKey::new(image, bundle, replicate);
        if let Some(hit) = self.cache.get(&key)? {
            return Ok((hit, Origin::Cached, Vec::new()));
        }

        let request = BackendRequest::new(key.clone(), bundle.request_text(), image);
        let mut rejected = Vec::new();
        for ask in 0..=reasks {
            let response = self.fetch(&request)?;
            if accept(&response) {
                let stored = self.cache.put(&response)?;
                return Ok((stored, Origin::Fetched, rejected));
            }
            self.cache.archive_rejected(&response, ask + 1)?;
            rejected.push(response);
        }
        let last = rejected.last().cloned().expect("at least one ask");
        Ok((last, Origin::Fetched, rejected))
    }

    fn fetch(&self, request: &BackendRequest) -> Result<RawResponse, GatewayError> {
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.backend.complete(request) {
                Ok(text) => {
                    return Ok(RawResponse {
                        key: request.key.clone(),
                        text,
                        received_at: stamp(),
                        backend: self.backend.name(),
                        attempt_count: attempts,
                    })
                }
                Err(BackendFailure::Transient(msg)) => {
                    if attempts > self.retry.max_retries {
                        return Err(GatewayError::BackendUnavailable {
                            attempts,
                            last_error: msg,
                        });
                    }
                    log::debug!("transient backend failure (attempt {attempts}): {msg}");
                    std::thread::sleep(self.retry.delay(attempts));
                }
                Err(BackendFailure::Rejected { status, body }) => {
                    let excerpt: String = body.chars().take(200).collect();
                    return Err(GatewayError::BackendRejected { status, excerpt });
                }
                Err(BackendFailure::ScriptMiss(digest)) => {
                    return Err(GatewayError::MockScriptMiss(digest))
                }
            }
        }
    }
}
