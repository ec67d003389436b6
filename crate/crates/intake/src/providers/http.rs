//! OpenAI-compatible `POST {base_url}/chat/completions` client.
//!
//! Request: `{model, messages: [{role: "system"}, {role: "user"}], temperature, max_tokens}`.
//! Response text is `choices[0].message.content`. A `finish_reason` of
//! `content_filter`, a non-null `message.refusal`, or a 4xx other than
//! 401/403/408/429 is reported as a refusal. Transport errors, 408, 429 and
//! 5xx are retried with exponential backoff.

use std::sync::OnceLock;
use std::thread;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use intake_core::screener::PromptPayload;
use intake_core::{Provider, ProviderError, Unavailable};

use super::ProviderConfig;

pub struct HttpChatProvider {
    endpoint: String,
    model: String,
    auth_env_var: Option<String>,
    timeout: Duration,
    max_retries: u32,
    backoff: Duration,
    client: OnceLock<reqwest::blocking::Client>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
    #[serde(default)]
    refusal: Option<String>,
}

enum Attempt {
    Done(Result<String, ProviderError>),
    Transient(String),
}

impl HttpChatProvider {
    pub fn from_config(cfg: &ProviderConfig) -> Self {
        let base = cfg.base_url.clone().unwrap_or_default();
        HttpChatProvider {
            endpoint: format!("{}/chat/completions", base.trim_end_matches('/')),
            model: cfg.model_name.clone().unwrap_or_default(),
            auth_env_var: cfg.auth_env_var.clone(),
            timeout: Duration::from_secs(cfg.timeout_secs.max(1)),
            max_retries: cfg.max_retries,
            backoff: Duration::from_millis(cfg.backoff_ms),
            client: OnceLock::new(),
        }
    }

    // Built lazily so construction is safe inside an async runtime.
    fn client(&self) -> &reqwest::blocking::Client {
        self.client.get_or_init(|| {
            reqwest::blocking::Client::builder().timeout(self.timeout).build().expect("http client")
        })
    }

    fn api_key(&self) -> Result<Option<String>, ProviderError> {
        match &self.auth_env_var {
            None => Ok(None),
            Some(var) => match std::env::var(var) {
                Ok(k) if !k.is_empty() => Ok(Some(k)),
                _ => Err(ProviderError::AuthMissing { detail: format!("environment variable {var} is not set") }),
            },
        }
    }

    fn attempt(&self, body: &serde_json::Value, key: Option<&str>) -> Attempt {
        let mut req = self.client().post(&self.endpoint).json(body);
        if let Some(k) = key {
            req = req.bearer_auth(k);
        }
        let resp = match req.send() {
            Ok(r) => r,
            Err(e) => return Attempt::Transient(e.to_string()),
        };
        let status = resp.status();
        let text = match resp.text() {
            Ok(t) => t,
            Err(e) => return Attempt::Transient(e.to_string()),
        };
        match status.as_u16() {
            200..=299 => {}
            401 | 403 => return Attempt::Done(Err(ProviderError::AuthMissing { detail: format!("HTTP {status}") })),
            408 | 429 => return Attempt::Transient(format!("HTTP {status}")),
            400..=499 => {
                return Attempt::Done(Err(ProviderError::ContentRefused { detail: format!("HTTP {status}: {text}") }))
            }
            _ => return Attempt::Transient(format!("HTTP {status}")),
        }
        let parsed: ChatResponse = match serde_json::from_str(&text) {
            Ok(p) => p,
            Err(e) => return Attempt::Transient(format!("malformed response: {e}")),
        };
        let Some(choice) = parsed.choices.into_iter().next() else {
            return Attempt::Transient("response has no choices".into());
        };
        if let Some(r) = choice.message.refusal {
            return Attempt::Done(Err(ProviderError::ContentRefused { detail: r }));
        }
        if choice.finish_reason.as_deref() == Some("content_filter") {
            return Attempt::Done(Err(ProviderError::ContentRefused { detail: "content_filter".into() }));
        }
        match choice.message.content {
            Some(c) => Attempt::Done(Ok(c)),
            None => Attempt::Done(Err(ProviderError::ContentRefused { detail: "empty content".into() })),
        }
    }
}

impl Provider for HttpChatProvider {
    fn complete(&self, payload: &PromptPayload) -> Result<String, ProviderError> {
        let key = self.api_key()?;
        let body = json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": payload.system_part},
                {"role": "user", "content": payload.user_part},
            ],
            "temperature": payload.decode_params.temperature(),
            "max_tokens": payload.decode_params.max_output_tokens,
        });
        let mut last = String::new();
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                thread::sleep(self.backoff * 2u32.saturating_pow(attempt - 1));
            }
            match self.attempt(&body, key.as_deref()) {
                Attempt::Done(r) => return r,
                Attempt::Transient(e) => {
                    tracing::debug!(endpoint = %self.endpoint, attempt, error = %e, "transient provider failure");
                    last = e;
                }
            }
        }
        Err(ProviderError::Unavailable(Unavailable::Transport(format!(
            "{} attempts failed, last error: {last}",
            self.max_retries + 1
        ))))
    }
}
