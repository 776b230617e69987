//! Model access behind a single [`Backend`] trait.
//!
//! Three backends are provided: [`HttpBackend`] for OpenAI-compatible chat
//! completion endpoints, [`ScriptedBackend`] which replays canned responses,
//! and [`SyntheticBackend`] which plays a model that repairs flagged defects
//! with some probability and occasionally introduces new ones.

mod defects;
mod extract;
mod http;
mod scripted;
mod synthetic;
mod templates;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use defects::{AppliedDefect, DefectError, DefectKind, DefectSpec};
pub use extract::{extract_template, ExtractedTemplate, NoTemplateFound};
pub use http::{api_key_from_env, complete_chat_http, HttpBackend, HttpCompletion, HttpEndpoint};
pub use scripted::ScriptedBackend;
pub use synthetic::{SyntheticBackend, SyntheticFixer, SyntheticParams};
pub use templates::base_template;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub model: String,
    pub temperature: f64,
    pub max_retries: u32,
    pub timeout_seconds: f64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            model: "gpt-4o".into(),
            temperature: 1.0,
            max_retries: 3,
            timeout_seconds: 120.0,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.model.is_empty() {
            return Err(GatewayError::InvalidConfig("model must not be empty".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(GatewayError::InvalidConfig("temperature must be >= 0".into()));
        }
        if !self.timeout_seconds.is_finite() || self.timeout_seconds <= 0.0 {
            return Err(GatewayError::InvalidConfig("timeout_seconds must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("transport error{}: {detail}", status.map(|s| format!(" (HTTP {s})")).unwrap_or_default())]
    Transport { status: Option<u16>, detail: String },
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("script exhausted after {0} responses")]
    ScriptExhausted(usize),
    #[error("invalid conversation: {0}")]
    InvalidConversation(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{0}")]
    Io(String),
}

/// Anything that can answer a conversation with text.
pub trait Backend: Send {
    fn complete(&mut self, conversation: &[ChatMessage], cfg: &GenerationConfig) -> Result<String, GatewayError>;
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn complete(&mut self, conversation: &[ChatMessage], cfg: &GenerationConfig) -> Result<String, GatewayError> {
        (**self).complete(conversation, cfg)
    }
}

/// Checks the conversation shape, then asks the backend.
pub fn generate(
    conversation: &[ChatMessage],
    cfg: &GenerationConfig,
    backend: &mut dyn Backend,
) -> Result<String, GatewayError> {
    match conversation.first() {
        None => return Err(GatewayError::InvalidConversation("conversation is empty".into())),
        Some(m) if m.role != Role::System => {
            return Err(GatewayError::InvalidConversation(
                "first message must have the system role".into(),
            ))
        }
        _ => {}
    }
    if let Some(i) = conversation.iter().position(|m| m.content.is_empty()) {
        return Err(GatewayError::InvalidConversation(format!(
            "message {i} has empty content"
        )));
    }
    backend.complete(conversation, cfg)
}
