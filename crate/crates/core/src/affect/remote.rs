//! Remote chat-completions provider.

use std::sync::{Condvar, Mutex};
#[cfg(feature = "remote")]
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    build_affect_prompt, default_shots, parse_provider_response, AffectProvider, ParsedReply,
    ProviderError, ProviderRequest, Shot,
};
use crate::config::CourseConfig;
use crate::window::ConversationWindow;

pub const API_KEY_ENV: &str = "CLASSPULSE_LLM_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    /// Chat-completions endpoint URL.
    pub endpoint: String,
    pub model: String,
    pub timeout_secs: u64,
    /// Upper bound on in-flight requests across all sessions.
    pub max_concurrency: usize,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/chat/completions".to_owned(),
            model: "gpt-4".to_owned(),
            timeout_secs: 10,
            max_concurrency: 4,
        }
    }
}

/// Sends one request and returns the assistant's text.
pub trait ChatTransport: Send + Sync {
    fn complete(&self, request: &ProviderRequest) -> Result<String, ProviderError>;
}

/// Pulls `choices[0].message.content` out of a chat-completions response body.
pub fn completion_content(body: &str) -> Result<String, ProviderError> {
    let value: Value = serde_json::from_str(body)
        .map_err(|e| ProviderError::Transport(format!("response is not JSON: {e}")))?;
    value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_owned)
        .ok_or_else(|| ProviderError::Transport("response has no choices[0].message.content".into()))
}

struct Semaphore {
    permits: Mutex<usize>,
    released: Condvar,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn new(permits: usize) -> Self {
        Self {
            permits: Mutex::new(permits.max(1)),
            released: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut permits = self.permits.lock().unwrap_or_else(|e| e.into_inner());
        while *permits == 0 {
            permits = self
                .released
                .wait(permits)
                .unwrap_or_else(|e| e.into_inner());
        }
        *permits -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.released.notify_one();
    }
}

/// Few-shot provider over any [`ChatTransport`].
pub struct RemoteProvider<T> {
    transport: T,
    shots: Vec<Shot>,
    limiter: Semaphore,
}

impl<T: ChatTransport> RemoteProvider<T> {
    pub fn new(transport: T, max_concurrency: usize) -> Self {
        Self {
            transport,
            shots: default_shots(),
            limiter: Semaphore::new(max_concurrency),
        }
    }

    pub fn with_shots(mut self, shots: Vec<Shot>) -> Self {
        self.shots = shots;
        self
    }
}

impl<T: ChatTransport> AffectProvider for RemoteProvider<T> {
    fn name(&self) -> &'static str {
        "remote"
    }

    fn score(
        &self,
        text: &str,
        window: &ConversationWindow,
        _config: &CourseConfig,
    ) -> Result<ParsedReply, ProviderError> {
        let request = build_affect_prompt(text, window, &self.shots);
        let content = {
            let _permit = self.limiter.acquire();
            self.transport.complete(&request)?
        };
        Ok(parse_provider_response(&content)?)
    }
}

/// Blocking HTTP transport with bearer-token auth.
#[cfg(feature = "remote")]
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    api_key: String,
}

#[cfg(feature = "remote")]
impl HttpTransport {
    pub fn new(config: &RemoteConfig, api_key: impl Into<String>) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        Ok(Self {
            client,
            endpoint: config.endpoint.clone(),
            model: config.model.clone(),
            api_key: api_key.into(),
        })
    }

    /// Reads the API key from `CLASSPULSE_LLM_API_KEY`.
    pub fn from_env(config: &RemoteConfig) -> Result<Self, ProviderError> {
        let key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or(ProviderError::MissingApiKey(API_KEY_ENV))?;
        Self::new(config, key)
    }
}

#[cfg(feature = "remote")]
impl ChatTransport for HttpTransport {
    fn complete(&self, request: &ProviderRequest) -> Result<String, ProviderError> {
        let body = serde_json::to_vec(&request.chat_body(&self.model))
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let response = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    ProviderError::Timeout
                } else {
                    ProviderError::Transport(e.to_string())
                }
            })?;
        let status = response.status();
        if !status.is_success() {
            return Err(ProviderError::Status(status.as_u16()));
        }
        let text = response.text().map_err(|e| {
            if e.is_timeout() {
                ProviderError::Timeout
            } else {
                ProviderError::Transport(e.to_string())
            }
        })?;
        completion_content(&text)
    }
}
