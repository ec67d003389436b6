//! Record/replay keyed by a hash of the prompt payload.
//!
//! The store is newline-delimited JSON, one [`CompletionRecord`] per line,
//! only ever appended to.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use intake_core::screener::PromptPayload;
use intake_core::{Provider, ProviderError, Timestamp, Unavailable};

use super::{ConfigError, ProviderConfig, ProviderKind};

/// Hex SHA-256 of the payload's canonical bytes.
pub fn fingerprint(payload: &PromptPayload) -> String {
    hex::encode(Sha256::digest(payload.canonical_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionRecord {
    pub fingerprint: String,
    pub response: String,
    pub provider: String,
    pub timestamp: Timestamp,
    #[serde(default)]
    pub latency_ms: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum RecordError {
    #[error("record mode requires an http_chat_completions provider, `{0}` is not one")]
    NotHttp(String),
    #[error("store {path} is not writable: {source}")]
    StoreNotWritable { path: PathBuf, source: std::io::Error },
}

/// Returns `cfg` configured to append every completion to `store`.
pub fn record_mode(cfg: &ProviderConfig, store: &Path) -> Result<ProviderConfig, RecordError> {
    if cfg.kind != ProviderKind::HttpChatCompletions {
        return Err(RecordError::NotHttp(cfg.name.clone()));
    }
    open_append(store)?;
    let mut out = cfg.clone();
    out.record_to = Some(store.to_path_buf());
    Ok(out)
}

fn open_append(path: &Path) -> Result<File, RecordError> {
    OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|source| RecordError::StoreNotWritable { path: path.to_path_buf(), source })
}

pub fn read_store(path: &Path) -> std::io::Result<Vec<CompletionRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(std::io::ErrorKind::InvalidData, format!("line {}: {e}", n + 1))
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Wraps a backend and appends a record for every successful completion.
pub struct RecordingProvider {
    inner: Box<dyn Provider>,
    name: String,
    store: Mutex<File>,
}

impl RecordingProvider {
    pub fn new(inner: Box<dyn Provider>, name: impl Into<String>, store: &Path) -> Result<Self, RecordError> {
        Ok(RecordingProvider { inner, name: name.into(), store: Mutex::new(open_append(store)?) })
    }
}

impl Provider for RecordingProvider {
    fn complete(&self, payload: &PromptPayload) -> Result<String, ProviderError> {
        let started = Instant::now();
        let response = self.inner.complete(payload)?;
        let rec = CompletionRecord {
            fingerprint: fingerprint(payload),
            response: response.clone(),
            provider: self.name.clone(),
            timestamp: crate::now(),
            latency_ms: started.elapsed().as_millis() as u64,
        };
        let mut line = serde_json::to_string(&rec).expect("record serializes");
        line.push('\n');
        let mut f = self.store.lock().expect("store lock");
        if let Err(e) = f.write_all(line.as_bytes()).and_then(|_| f.flush()) {
            tracing::warn!(provider = %self.name, error = %e, "failed to append completion record");
        }
        Ok(response)
    }
}

/// Serves recorded responses by payload fingerprint.
#[derive(Debug)]
pub struct ReplayProvider {
    responses: HashMap<String, String>,
}

impl ReplayProvider {
    /// Builds from records; when `source` is set only that provider's records
    /// are used. The first record for a fingerprint wins.
    pub fn from_records(records: impl IntoIterator<Item = CompletionRecord>, source: Option<&str>) -> Self {
        let mut responses = HashMap::new();
        for r in records {
            if source.is_none_or(|s| s == r.provider) {
                responses.entry(r.fingerprint).or_insert(r.response);
            }
        }
        ReplayProvider { responses }
    }

    pub(super) fn from_config(cfg: &ProviderConfig) -> Result<Self, ConfigError> {
        let path = cfg.store.as_ref().ok_or_else(|| ConfigError::MissingStore(cfg.name.clone()))?;
        let records =
            read_store(path).map_err(|e| ConfigError::Store { name: cfg.name.clone(), detail: e.to_string() })?;
        Ok(ReplayProvider::from_records(records, cfg.source.as_deref()))
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl Provider for ReplayProvider {
    fn complete(&self, payload: &PromptPayload) -> Result<String, ProviderError> {
        let fp = fingerprint(payload);
        self.responses
            .get(&fp)
            .cloned()
            .ok_or(ProviderError::Unavailable(Unavailable::ReplayMiss { fingerprint: fp }))
    }
}
