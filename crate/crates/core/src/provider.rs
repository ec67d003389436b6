//! The seam between the screening protocol and whatever produces completions.

use alloc::string::String;
use core::fmt;

use crate::screener::prompt::PromptPayload;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Unavailable {
    /// Transport failed on every attempt.
    Transport(String),
    ReplayMiss { fingerprint: String },
    ScriptExhausted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderError {
    Unavailable(Unavailable),
    AuthMissing { detail: String },
    /// The backend declined to answer the prompt.
    ContentRefused { detail: String },
}

impl fmt::Display for ProviderError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProviderError::Unavailable(Unavailable::Transport(e)) => write!(f, "provider unavailable: {e}"),
            ProviderError::Unavailable(Unavailable::ReplayMiss { fingerprint }) => {
                write!(f, "provider unavailable: no recorded response for fingerprint {fingerprint}")
            }
            ProviderError::Unavailable(Unavailable::ScriptExhausted) => {
                f.write_str("provider unavailable: scripted responses exhausted")
            }
            ProviderError::AuthMissing { detail } => write!(f, "authentication missing: {detail}"),
            ProviderError::ContentRefused { detail } => write!(f, "content refused: {detail}"),
        }
    }
}

/// A chat-completion backend. Implementations return the reply text verbatim.
pub trait Provider: Send + Sync {
    fn complete(&self, payload: &PromptPayload) -> Result<String, ProviderError>;
}

impl<P: Provider + ?Sized> Provider for &P {
    fn complete(&self, payload: &PromptPayload) -> Result<String, ProviderError> {
        (**self).complete(payload)
    }
}

impl<P: Provider + ?Sized> Provider for alloc::boxed::Box<P> {
    fn complete(&self, payload: &PromptPayload) -> Result<String, ProviderError> {
        (**self).complete(payload)
    }
}

impl<P: Provider + ?Sized> Provider for alloc::sync::Arc<P> {
    fn complete(&self, payload: &PromptPayload) -> Result<String, ProviderError> {
        (**self).complete(payload)
    }
}
