//! Completion backends: an OpenAI-style HTTP client, a scripted fake, a
//! replay store and a recording wrapper.

mod http;
mod record;
mod scripted;

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use intake_core::Provider;

pub use http::HttpChatProvider;
pub use record::{
    fingerprint, read_store, record_mode, CompletionRecord, RecordError, RecordingProvider, ReplayProvider,
};
pub use scripted::{ScriptRule, ScriptedProvider};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    HttpChatCompletions,
    Scripted,
    Replay,
}

fn default_timeout() -> u64 {
    60
}

fn default_retries() -> u32 {
    2
}

fn default_backoff() -> u64 {
    500
}

/// One configured backend as written in a providers or service config file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    pub name: String,
    pub kind: ProviderKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_name: Option<String>,
    /// Environment variable holding the API key. No auth header when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_env_var: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// First backoff delay; doubles on each further retry.
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
    /// Append every completion to this store (HTTP kind only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_to: Option<PathBuf>,

    /// Scripted: replies served in FIFO order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub script: Vec<String>,
    /// Scripted: keep serving the last reply once the queue is empty.
    #[serde(default)]
    pub repeat_last: bool,
    /// Scripted: content-matched replies, checked before the queue.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rules: Vec<ScriptRule>,

    /// Replay: path of the record store.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub store: Option<PathBuf>,
    /// Replay: only use records made by this provider name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("provider `{0}`: http_chat_completions requires base_url and model_name")]
    MissingHttpFields(String),
    #[error("provider `{0}`: replay requires store")]
    MissingStore(String),
    #[error("provider `{0}`: record_to is only allowed for http_chat_completions")]
    RecordNotHttp(String),
    #[error("provider name `{0}` is declared more than once")]
    DuplicateName(String),
    #[error("provider `{name}`: cannot read replay store: {detail}")]
    Store { name: String, detail: String },
    #[error("provider `{name}`: {detail}")]
    Scripted { name: String, detail: String },
}

impl ProviderConfig {
    pub fn scripted(name: impl Into<String>, script: Vec<String>) -> Self {
        ProviderConfig {
            name: name.into(),
            kind: ProviderKind::Scripted,
            base_url: None,
            model_name: None,
            auth_env_var: None,
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
            backoff_ms: default_backoff(),
            record_to: None,
            script,
            repeat_last: false,
            rules: Vec::new(),
            store: None,
            source: None,
        }
    }

    pub fn http(name: impl Into<String>, base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        ProviderConfig {
            kind: ProviderKind::HttpChatCompletions,
            base_url: Some(base_url.into()),
            model_name: Some(model_name.into()),
            ..ProviderConfig::scripted(name, Vec::new())
        }
    }

    pub fn replay(name: impl Into<String>, store: impl Into<PathBuf>) -> Self {
        ProviderConfig {
            kind: ProviderKind::Replay,
            store: Some(store.into()),
            ..ProviderConfig::scripted(name, Vec::new())
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match self.kind {
            ProviderKind::HttpChatCompletions => {
                if self.base_url.as_deref().is_none_or(str::is_empty)
                    || self.model_name.as_deref().is_none_or(str::is_empty)
                {
                    return Err(ConfigError::MissingHttpFields(self.name.clone()));
                }
            }
            ProviderKind::Replay if self.store.is_none() => return Err(ConfigError::MissingStore(self.name.clone())),
            _ => {}
        }
        if self.record_to.is_some() && self.kind != ProviderKind::HttpChatCompletions {
            return Err(ConfigError::RecordNotHttp(self.name.clone()));
        }
        Ok(())
    }

    /// Instantiates the backend described by this config.
    pub fn build(&self) -> Result<Arc<dyn Provider>, ConfigError> {
        self.validate()?;
        Ok(match self.kind {
            ProviderKind::Scripted => Arc::new(ScriptedProvider::from_config(self)?),
            ProviderKind::Replay => Arc::new(ReplayProvider::from_config(self)?),
            ProviderKind::HttpChatCompletions => {
                let http = HttpChatProvider::from_config(self);
                match &self.record_to {
                    Some(path) => Arc::new(
                        RecordingProvider::new(Box::new(http), self.name.clone(), path).map_err(|e| {
                            ConfigError::Store { name: self.name.clone(), detail: e.to_string() }
                        })?,
                    ),
                    None => Arc::new(http),
                }
            }
        })
    }
}

/// Checks that every name is unique and every config is valid.
pub fn validate_registry(configs: &[ProviderConfig]) -> Result<(), ConfigError> {
    let mut seen = BTreeSet::new();
    for c in configs {
        c.validate()?;
        if !seen.insert(c.name.as_str()) {
            return Err(ConfigError::DuplicateName(c.name.clone()));
        }
    }
    Ok(())
}

/// A built backend paired with its configured name.
#[derive(Clone)]
pub struct NamedProvider {
    pub name: String,
    pub provider: Arc<dyn Provider>,
}

impl NamedProvider {
    pub fn new(name: impl Into<String>, provider: Arc<dyn Provider>) -> Self {
        NamedProvider { name: name.into(), provider }
    }
}

pub fn build_all(configs: &[ProviderConfig]) -> Result<Vec<NamedProvider>, ConfigError> {
    validate_registry(configs)?;
    configs.iter().map(|c| Ok(NamedProvider::new(c.name.clone(), c.build()?))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn http_requires_url_and_model() {
        let mut c = ProviderConfig::http("m", "http://localhost", "gpt");
        assert!(c.validate().is_ok());
        c.base_url = None;
        assert_eq!(c.validate(), Err(ConfigError::MissingHttpFields("m".into())));
    }

    #[test]
    fn names_must_be_unique() {
        let a = ProviderConfig::scripted("a", vec![]);
        assert_eq!(validate_registry(&[a.clone(), a]), Err(ConfigError::DuplicateName("a".into())));
    }

    #[test]
    fn toml_shape() {
        let c: ProviderConfig = toml::from_str(
            r#"
            name = "gpt-4-turbo"
            kind = "http_chat_completions"
            base_url = "https://api.openai.com/v1"
            model_name = "gpt-4-turbo-2024-04-09"
            auth_env_var = "OPENAI_API_KEY"
            "#,
        )
        .unwrap();
        assert_eq!(c.kind, ProviderKind::HttpChatCompletions);
        assert_eq!(c.max_retries, 2);
        assert!(toml::from_str::<ProviderConfig>("name = \"x\"\nkind = \"scripted\"\nbogus = 1").is_err());
    }
}
