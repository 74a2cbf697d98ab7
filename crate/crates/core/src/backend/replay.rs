use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{BackendError, ChatRequest, CompletionRecord, LanguageModel};

/// One line of the replay store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredExchange {
    pub hash: String,
    pub request: serde_json::Value,
    pub response: String,
}

#[derive(Debug, Default)]
struct Inner {
    entries: HashMap<String, StoredExchange>,
    file: Option<File>,
}

/// Append-only map from request hash to response, optionally backed by a
/// JSONL file. Writes are serialized by an internal lock.
#[derive(Debug, Default)]
pub struct ReplayStore {
    path: Option<PathBuf>,
    inner: Mutex<Inner>,
}

impl ReplayStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (creating if needed) a store file and loads its records.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let path = path.as_ref().to_path_buf();
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            for (n, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let e: StoredExchange = serde_json::from_str(&line)
                    .map_err(|err| BackendError::Corrupt { line: n + 1, message: err.to_string() })?;
                insert_checked(&mut entries, e)?;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self { path: Some(path), inner: Mutex::new(Inner { entries, file: Some(file) }) })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.lock().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, hash: &str) -> Option<String> {
        self.lock().entries.get(hash).map(|e| e.response.clone())
    }

    /// Stores `response` for `request`. Re-recording an identical pair is a
    /// no-op; a different response under the same hash is an error.
    pub fn record(&self, request: &ChatRequest, response: &str) -> Result<(), BackendError> {
        let hash = request.hash();
        let mut inner = self.lock();
        if let Some(existing) = inner.entries.get(&hash) {
            return if existing.response == response {
                Ok(())
            } else {
                Err(BackendError::Integrity { hash })
            };
        }
        let entry = StoredExchange { hash: hash.clone(), request: request.canonical(), response: response.to_string() };
        if let Some(file) = inner.file.as_mut() {
            let mut line = serde_json::to_string(&entry).expect("replay entries serialize");
            line.push('\n');
            file.write_all(line.as_bytes())?;
            file.flush()?;
        }
        inner.entries.insert(hash, entry);
        Ok(())
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }
}

fn insert_checked(entries: &mut HashMap<String, StoredExchange>, e: StoredExchange) -> Result<(), BackendError> {
    match entries.get(&e.hash) {
        Some(old) if old.response != e.response => Err(BackendError::Integrity { hash: e.hash }),
        Some(_) => Ok(()),
        None => {
            entries.insert(e.hash.clone(), e);
            Ok(())
        }
    }
}

/// Serves completions from a [`ReplayStore`] only.
#[derive(Debug)]
pub struct ReplayBackend {
    store: std::sync::Arc<ReplayStore>,
}

impl ReplayBackend {
    pub fn new(store: std::sync::Arc<ReplayStore>) -> Self {
        Self { store }
    }
}

impl LanguageModel for ReplayBackend {
    fn id(&self) -> &str {
        "replay"
    }

    fn complete(&self, request: &ChatRequest) -> Result<CompletionRecord, BackendError> {
        let hash = request.hash();
        match self.store.get(&hash) {
            Some(response) => Ok(CompletionRecord { hash, response, latency_ms: 0, backend: "replay".into() }),
            None => Err(BackendError::ReplayMiss { hash, role: request.tag.role, step: request.tag.step }),
        }
    }
}

/// Forwards to an inner backend and records every exchange.
pub struct RecordingBackend<M> {
    inner: M,
    store: std::sync::Arc<ReplayStore>,
}

impl<M: LanguageModel> RecordingBackend<M> {
    pub fn new(inner: M, store: std::sync::Arc<ReplayStore>) -> Self {
        Self { inner, store }
    }
}

impl<M: LanguageModel> LanguageModel for RecordingBackend<M> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn complete(&self, request: &ChatRequest) -> Result<CompletionRecord, BackendError> {
        let rec = self.inner.complete(request)?;
        self.store.record(request, &rec.response)?;
        Ok(rec)
    }
}
