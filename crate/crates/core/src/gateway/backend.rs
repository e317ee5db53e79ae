use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use base64::Engine as _;
use serde_json::{json, Value};

use super::{BackendConfig, GatewayError, RequestKey};

/// One single-turn request: the prompt text and one image.
#[derive(Debug, Clone)]
pub struct BackendRequest {
    pub key: RequestKey,
    pub text: String,
    pub image: Vec<u8>,
}

impl BackendRequest {
    pub fn new(key: RequestKey, text: String, image: &[u8]) -> Self {
        BackendRequest {
            key,
            text,
            image: image.to_vec(),
        }
    }

    /// MIME type sniffed from the image's magic bytes.
    pub fn mime(&self) -> &'static str {
        match self.image.as_slice() {
            [0x89, b'P', b'N', b'G', ..] => "image/png",
            [b'G', b'I', b'F', b'8', ..] => "image/gif",
            [b'R', b'I', b'F', b'F', _, _, _, _, b'W', b'E', b'B', b'P', ..] => "image/webp",
            _ => "image/jpeg",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendFailure {
    /// Worth retrying: transport errors, timeouts, 429 and 5xx.
    Transient(String),
    Rejected { status: u16, body: String },
    ScriptMiss(String),
}

pub trait Backend: Send + Sync {
    fn name(&self) -> String;
    fn complete(&self, request: &BackendRequest) -> Result<String, BackendFailure>;
}

/// Request-key digest -> canned response text.
pub type MockScript = BTreeMap<String, String>;

/// Replays a script keyed by [`RequestKey::digest`].
pub struct MockBackend {
    script: MockScript,
}

impl MockBackend {
    pub fn new(script: MockScript) -> Self {
        MockBackend { script }
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path).map_err(|source| GatewayError::Io {
            path: path.to_owned(),
            source,
        })?;
        let script: MockScript = serde_json::from_str(&text)
            .map_err(|e| GatewayError::Config(format!("mock script {}: {e}", path.display())))?;
        Ok(MockBackend::new(script))
    }
}

impl Backend for MockBackend {
    fn name(&self) -> String {
        "mock".into()
    }

    fn complete(&self, request: &BackendRequest) -> Result<String, BackendFailure> {
        let digest = request.key.digest();
        self.script
            .get(&digest)
            .cloned()
            .ok_or(BackendFailure::ScriptMiss(digest))
    }
}

/// OpenAI-compatible chat-completions client.
pub struct LiveBackend {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    temperature: f64,
    api_key: Option<String>,
}

impl LiveBackend {
    pub fn from_config(cfg: &BackendConfig) -> Result<Self, GatewayError> {
        let endpoint = cfg
            .endpoint
            .clone()
            .ok_or_else(|| GatewayError::Config("live backend requires an endpoint".into()))?;
        let api_key = match &cfg.credentials_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                GatewayError::Config(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(LiveBackend {
            agent,
            endpoint,
            model: cfg.model_name.clone(),
            temperature: cfg.temperature,
            api_key,
        })
    }

    fn payload(&self, request: &BackendRequest) -> Value {
        let data = base64::engine::general_purpose::STANDARD.encode(&request.image);
        json!({
            "model": self.model,
            "temperature": self.temperature,
            "messages": [{
                "role": "user",
                "content": [
                    {"type": "text", "text": request.text},
                    {"type": "image_url",
                     "image_url": {"url": format!("data:{};base64,{data}", request.mime())}},
                ],
            }],
        })
    }
}

/// Pulls the assistant text out of a chat-completions response body.
fn completion_text(body: &str) -> Option<String> {
    let v: Value = serde_json::from_str(body).ok()?;
    let content = &v["choices"][0]["message"]["content"];
    match content {
        Value::String(s) => Some(s.clone()),
        Value::Array(parts) => Some(
            parts
                .iter()
                .filter_map(|p| p["text"].as_str())
                .collect::<Vec<_>>()
                .join(""),
        ),
        _ => None,
    }
}

impl Backend for LiveBackend {
    fn name(&self) -> String {
        format!("live:{}", self.model)
    }

    fn complete(&self, request: &BackendRequest) -> Result<String, BackendFailure> {
        let mut req = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = req
            .send_json(self.payload(request))
            .map_err(|e| BackendFailure::Transient(e.to_string()))?;
        let status = response.status().as_u16();
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendFailure::Transient(e.to_string()))?;
        if status == 429 || status >= 500 {
            return Err(BackendFailure::Transient(format!("HTTP {status}")));
        }
        if !(200..300).contains(&status) {
            return Err(BackendFailure::Rejected { status, body });
        }
        completion_text(&body).ok_or(BackendFailure::Rejected {
            status,
            body: format!("no completion text in response: {body}"),
        })
    }
}
