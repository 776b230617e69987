use std::thread;
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::Serialize;
use serde_json::Value;

use super::{Backend, ChatMessage, GatewayError, GenerationConfig};

const BODY_EXCERPT_CHARS: usize = 200;

/// Where and how to reach an OpenAI-compatible chat completion service.
#[derive(Debug, Clone)]
pub struct HttpEndpoint {
    /// Base URL without the `/v1/chat/completions` suffix.
    pub base_url: String,
    pub api_key: String,
    /// First retry delay; doubles on each further retry.
    pub backoff_base: Duration,
}

impl HttpEndpoint {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            api_key: api_key.into(),
            backoff_base: Duration::from_secs(1),
        }
    }

    /// Uses the key from `IACLOOP_API_KEY`, falling back to `OPENAI_API_KEY`.
    pub fn from_env(base_url: impl Into<String>) -> Result<Self, GatewayError> {
        let key =
            api_key_from_env().ok_or_else(|| GatewayError::Auth("set IACLOOP_API_KEY or OPENAI_API_KEY".into()))?;
        Ok(Self::new(base_url, key))
    }

    fn completions_url(&self) -> String {
        format!("{}/v1/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

pub fn api_key_from_env() -> Option<String> {
    ["IACLOOP_API_KEY", "OPENAI_API_KEY"]
        .iter()
        .find_map(|var| std::env::var(var).ok().filter(|v| !v.is_empty()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpCompletion {
    pub content: String,
    /// Retries spent before the successful attempt.
    pub retries: u32,
}

#[derive(Serialize)]
struct RequestBody<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
}

/// One chat completion round trip, returning `choices[0].message.content`.
pub fn complete_chat_http(
    conversation: &[ChatMessage],
    cfg: &GenerationConfig,
    endpoint: &HttpEndpoint,
) -> Result<String, GatewayError> {
    let client = build_client()?;
    send(&client, conversation, cfg, endpoint).map(|c| c.content)
}

fn build_client() -> Result<Client, GatewayError> {
    Client::builder().build().map_err(|e| GatewayError::Transport {
        status: None,
        detail: format!("cannot build HTTP client: {e}"),
    })
}

fn excerpt(body: &str) -> String {
    body.chars().take(BODY_EXCERPT_CHARS).collect()
}

fn send(
    client: &Client,
    conversation: &[ChatMessage],
    cfg: &GenerationConfig,
    endpoint: &HttpEndpoint,
) -> Result<HttpCompletion, GatewayError> {
    cfg.validate()?;
    let body = RequestBody {
        model: &cfg.model,
        messages: conversation,
        temperature: cfg.temperature,
    };
    let url = endpoint.completions_url();
    let mut retries = 0u32;
    loop {
        let result = client
            .post(&url)
            .bearer_auth(&endpoint.api_key)
            .timeout(Duration::from_secs_f64(cfg.timeout_seconds))
            .json(&body)
            .send();

        let retryable = match result {
            Ok(resp) => {
                let status = resp.status();
                let text = resp.text().unwrap_or_default();
                if status == StatusCode::UNAUTHORIZED {
                    return Err(GatewayError::Auth(excerpt(&text)));
                }
                if status.is_server_error() {
                    GatewayError::Transport {
                        status: Some(status.as_u16()),
                        detail: excerpt(&text),
                    }
                } else if !status.is_success() {
                    return Err(GatewayError::Transport {
                        status: Some(status.as_u16()),
                        detail: excerpt(&text),
                    });
                } else {
                    let content = parse_content(&text).map_err(|detail| GatewayError::Transport {
                        status: Some(status.as_u16()),
                        detail,
                    })?;
                    return Ok(HttpCompletion { content, retries });
                }
            }
            Err(e) if e.is_timeout() => GatewayError::Transport {
                status: None,
                detail: format!("request timed out: {e}"),
            },
            Err(e) => {
                return Err(GatewayError::Transport {
                    status: None,
                    detail: e.to_string(),
                })
            }
        };

        if retries >= cfg.max_retries {
            return Err(retryable);
        }
        let delay = endpoint.backoff_base * 2u32.saturating_pow(retries);
        log::warn!("{retryable}; retrying in {delay:?}");
        thread::sleep(delay);
        retries += 1;
    }
}

fn parse_content(body: &str) -> Result<String, String> {
    let value: Value =
        serde_json::from_str(body).map_err(|e| format!("response is not JSON ({e}): {}", excerpt(body)))?;
    let choices = value
        .get("choices")
        .ok_or("response missing field 'choices'")?
        .as_array()
        .ok_or("response field 'choices' is not an array")?;
    let first = choices.first().ok_or("response field 'choices' is empty")?;
    first
        .get("message")
        .and_then(|m| m.get("content"))
        .and_then(Value::as_str)
        .map(str::to_owned)
        .ok_or_else(|| "response missing field 'choices[0].message.content'".to_owned())
}

/// Live backend. Conversations are sent as-is; nothing is accumulated.
pub struct HttpBackend {
    endpoint: HttpEndpoint,
    client: Option<Client>,
    last_retries: u32,
}

impl HttpBackend {
    pub fn new(endpoint: HttpEndpoint) -> Self {
        Self {
            endpoint,
            client: None,
            last_retries: 0,
        }
    }

    /// Retries spent by the most recent successful call.
    pub fn last_retries(&self) -> u32 {
        self.last_retries
    }
}

impl Backend for HttpBackend {
    fn complete(&mut self, conversation: &[ChatMessage], cfg: &GenerationConfig) -> Result<String, GatewayError> {
        if self.client.is_none() {
            self.client = Some(build_client()?);
        }
        let client = self.client.as_ref().expect("client initialised above");
        let completion = send(client, conversation, cfg, &self.endpoint)?;
        self.last_retries = completion.retries;
        Ok(completion.content)
    }
}
