//! Completion backends behind a single [`LanguageModel`] trait: a remote
//! chat-completion endpoint, a deterministic scripted controller and a
//! record/replay cache keyed by request digest.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::orchestrator::ControllerMode;
use crate::world::{AgentOutcome, ObservationBundle};

mod remote;
mod replay;
pub mod scripted;

pub use remote::{RemoteChat, RemoteConfig, API_KEY_ENV};
pub use replay::{RecordingBackend, ReplayBackend, ReplayStore, StoredExchange};
pub use scripted::ScriptedBackend;

/// Loop module that issued a request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModuleRole {
    Planner,
    Actor,
    Corrector,
    Verifier,
    Baseline,
}

impl ModuleRole {
    pub fn as_str(self) -> &'static str {
        match self {
            ModuleRole::Planner => "planner",
            ModuleRole::Actor => "actor",
            ModuleRole::Corrector => "corrector",
            ModuleRole::Verifier => "verifier",
            ModuleRole::Baseline => "baseline",
        }
    }
}

impl fmt::Display for ModuleRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RequestTag {
    pub role: ModuleRole,
    pub step: u32,
}

/// Structured view of what a prompt was assembled from. Only in-process
/// backends look at it; it is neither sent over the wire nor hashed.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptContext {
    pub mode: ControllerMode,
    pub instruction: String,
    pub agents: Vec<String>,
    pub observations: Vec<ObservationBundle>,
    pub open_subtasks: Vec<String>,
    pub completed_subtasks: Vec<String>,
    pub memory: String,
    /// Outcomes of the last executed joint action (empty before the first).
    pub previous: Vec<AgentOutcome>,
    /// Corrective action text per agent from the previous step.
    pub corrective: Vec<Option<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub tag: RequestTag,
    #[serde(skip)]
    pub context: Option<Arc<PromptContext>>,
}

impl PartialEq for ChatRequest {
    fn eq(&self, other: &Self) -> bool {
        self.canonical() == other.canonical() && self.max_tokens == other.max_tokens && self.tag == other.tag
    }
}

impl ChatRequest {
    pub fn new(model: impl Into<String>, system: impl Into<String>, user: impl Into<String>, tag: RequestTag) -> Self {
        Self {
            model: model.into(),
            system: system.into(),
            user: user.into(),
            temperature: 0.0,
            max_tokens: 1024,
            tag,
            context: None,
        }
    }

    pub fn with_context(mut self, context: PromptContext) -> Self {
        self.context = Some(Arc::new(context));
        self
    }

    pub fn messages(&self) -> serde_json::Value {
        json!([
            {"role": "system", "content": self.system},
            {"role": "user", "content": self.user},
        ])
    }

    /// Canonical `{model, temperature, messages}` object the digest covers.
    pub fn canonical(&self) -> serde_json::Value {
        json!({"model": self.model, "temperature": self.temperature, "messages": self.messages()})
    }

    /// Lowercase hex SHA-256 of the canonical JSON bytes.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(&self.canonical()).expect("canonical request serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Chat-completion request body.
    pub fn wire_body(&self) -> serde_json::Value {
        json!({
            "model": self.model,
            "messages": self.messages(),
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRecord {
    pub hash: String,
    pub response: String,
    pub latency_ms: u64,
    pub backend: String,
}

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("backend unavailable after {attempts} attempt(s): {last}")]
    Unavailable { attempts: u32, last: String },
    #[error("replay miss for {role} request at step {step} (hash {hash})")]
    ReplayMiss { hash: String, role: ModuleRole, step: u32 },
    #[error("replay store integrity error: hash {hash} already maps to a different response")]
    Integrity { hash: String },
    #[error("replay store i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt replay store line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("scripted backend: {0}")]
    Scripted(String),
}

/// A completion service. The orchestrator only ever talks to this trait.
pub trait LanguageModel: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, request: &ChatRequest) -> Result<CompletionRecord, BackendError>;
}

impl<T: LanguageModel + ?Sized> LanguageModel for Arc<T> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn complete(&self, request: &ChatRequest) -> Result<CompletionRecord, BackendError> {
        (**self).complete(request)
    }
}

impl<T: LanguageModel + ?Sized> LanguageModel for Box<T> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn complete(&self, request: &ChatRequest) -> Result<CompletionRecord, BackendError> {
        (**self).complete(request)
    }
}
