use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{BackendError, ChatRequest, CompletionRecord, LanguageModel};

/// Environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "SAR_LLM_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    /// Full URL of the chat-completion endpoint.
    pub endpoint: String,
    pub attempts: u32,
    pub base_delay_ms: u64,
    pub timeout_secs: u64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/chat/completions".to_string(),
            attempts: 3,
            base_delay_ms: 500,
            timeout_secs: 120,
        }
    }
}

/// Blocking client for an OpenAI-style `/chat/completions` endpoint.
#[derive(Debug)]
pub struct RemoteChat {
    client: reqwest::blocking::Client,
    config: RemoteConfig,
    api_key: Option<String>,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

enum AttemptError {
    Retry(String),
    Fatal(String),
}

impl RemoteChat {
    /// Reads the key from [`API_KEY_ENV`]; a missing key is allowed for
    /// local servers that do not check it.
    pub fn from_env(config: RemoteConfig) -> Result<Self, BackendError> {
        Self::new(config, std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()))
    }

    pub fn new(config: RemoteConfig, api_key: Option<String>) -> Result<Self, BackendError> {
        if config.attempts == 0 {
            return Err(BackendError::Config("attempts must be at least 1".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(Self { client, config, api_key })
    }

    fn attempt(&self, body: &serde_json::Value) -> Result<String, AttemptError> {
        let mut req = self.client.post(&self.config.endpoint).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| AttemptError::Retry(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(AttemptError::Retry(format!("HTTP {status}")));
        }
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(AttemptError::Fatal(format!("HTTP {status}: {}", text.chars().take(200).collect::<String>())));
        }
        let parsed: WireResponse = resp.json().map_err(|e| AttemptError::Fatal(format!("bad response body: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| AttemptError::Fatal("response has no message content".into()))
    }
}

impl LanguageModel for RemoteChat {
    fn id(&self) -> &str {
        "remote"
    }

    fn complete(&self, request: &ChatRequest) -> Result<CompletionRecord, BackendError> {
        let body = request.wire_body();
        let start = Instant::now();
        let mut last = String::new();
        for attempt in 0..self.config.attempts {
            if attempt > 0 {
                thread::sleep(Duration::from_millis(self.config.base_delay_ms << (attempt - 1)));
            }
            match self.attempt(&body) {
                Ok(response) => {
                    return Ok(CompletionRecord {
                        hash: request.hash(),
                        response,
                        latency_ms: start.elapsed().as_millis() as u64,
                        backend: self.id().to_string(),
                    })
                }
                Err(AttemptError::Retry(e)) => {
                    log::warn!("{} request failed (attempt {}): {e}", request.tag.role, attempt + 1);
                    last = e;
                }
                Err(AttemptError::Fatal(e)) => {
                    return Err(BackendError::Unavailable { attempts: attempt + 1, last: e });
                }
            }
        }
        Err(BackendError::Unavailable { attempts: self.config.attempts, last })
    }
}
