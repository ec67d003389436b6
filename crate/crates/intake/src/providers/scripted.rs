use std::collections::VecDeque;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use intake_core::screener::PromptPayload;
use intake_core::{Provider, ProviderError, Unavailable};

use super::{ConfigError, ProviderConfig};

/// Replies starting with this directive are turned into a refusal.
pub const REFUSE_DIRECTIVE: &str = "@refuse";
/// Replies starting with this directive simulate an unreachable backend.
pub const UNAVAILABLE_DIRECTIVE: &str = "@unavailable";

/// Reply used whenever the prompt's user part contains every needle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptRule {
    pub contains: Vec<String>,
    pub reply: String,
}

/// Deterministic test double.
///
/// Content rules are consulted first; otherwise replies come off the script
/// in FIFO order. An exhausted script is an error unless `repeat_last` is set.
#[derive(Debug)]
pub struct ScriptedProvider {
    rules: Vec<ScriptRule>,
    repeat_last: bool,
    queue: Mutex<ScriptQueue>,
}

#[derive(Debug)]
struct ScriptQueue {
    pending: VecDeque<String>,
    last: Option<String>,
}

impl ScriptedProvider {
    pub fn new(script: impl IntoIterator<Item = impl Into<String>>) -> Self {
        ScriptedProvider {
            rules: Vec::new(),
            repeat_last: false,
            queue: Mutex::new(ScriptQueue { pending: script.into_iter().map(Into::into).collect(), last: None }),
        }
    }

    /// Serves `reply` for every call.
    pub fn always(reply: impl Into<String>) -> Self {
        ScriptedProvider::new([reply.into()]).repeating()
    }

    pub fn repeating(mut self) -> Self {
        self.repeat_last = true;
        self
    }

    pub fn with_rule(mut self, contains: &[&str], reply: impl Into<String>) -> Self {
        self.rules.push(ScriptRule { contains: contains.iter().map(|s| s.to_string()).collect(), reply: reply.into() });
        self
    }

    pub(super) fn from_config(cfg: &ProviderConfig) -> Result<Self, ConfigError> {
        if cfg.script.is_empty() && cfg.rules.is_empty() {
            return Err(ConfigError::Scripted { name: cfg.name.clone(), detail: "needs script or rules".into() });
        }
        let mut p = ScriptedProvider::new(cfg.script.iter().cloned());
        p.repeat_last = cfg.repeat_last;
        p.rules = cfg.rules.clone();
        Ok(p)
    }

    pub fn remaining(&self) -> usize {
        self.queue.lock().expect("script lock").pending.len()
    }

    fn next_reply(&self, payload: &PromptPayload) -> Result<String, ProviderError> {
        if let Some(rule) =
            self.rules.iter().find(|r| r.contains.iter().all(|needle| payload.user_part.contains(needle.as_str())))
        {
            return Ok(rule.reply.clone());
        }
        let mut q = self.queue.lock().expect("script lock");
        match q.pending.pop_front() {
            Some(r) => {
                q.last = Some(r.clone());
                Ok(r)
            }
            None if self.repeat_last => q.last.clone().ok_or(ProviderError::Unavailable(Unavailable::ScriptExhausted)),
            None => Err(ProviderError::Unavailable(Unavailable::ScriptExhausted)),
        }
    }
}

impl Provider for ScriptedProvider {
    fn complete(&self, payload: &PromptPayload) -> Result<String, ProviderError> {
        let reply = self.next_reply(payload)?;
        if let Some(rest) = reply.strip_prefix(REFUSE_DIRECTIVE) {
            return Err(ProviderError::ContentRefused { detail: rest.trim().to_string() });
        }
        if let Some(rest) = reply.strip_prefix(UNAVAILABLE_DIRECTIVE) {
            return Err(ProviderError::Unavailable(Unavailable::Transport(rest.trim().to_string())));
        }
        Ok(reply)
    }
}
