//! Chat-model backend over JSON HTTP.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use xchem_core::dialogue::{BackendError, ChatBackend, ChatMessage};

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    stream: bool,
}

#[derive(Deserialize)]
struct ChatReply {
    message: ReplyMessage,
}

#[derive(Deserialize)]
struct ReplyMessage {
    content: String,
}

/// `{model, messages, temperature}` → `{message: {content}}`, retrying
/// transport failures and server errors with exponential backoff.
pub struct HttpChat {
    url: String,
    model: String,
    temperature: f64,
    retries: u32,
    client: reqwest::blocking::Client,
}

impl HttpChat {
    pub fn new(url: impl Into<String>, model: impl Into<String>, temperature: f64, timeout: Duration, retries: u32) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(Self { url: url.into(), model: model.into(), temperature, retries, client })
    }

    fn attempt(&self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        let body = ChatRequest { model: &self.model, messages, temperature: self.temperature, stream: false };
        let resp = self
            .client
            .post(&self.url)
            .json(&body)
            .send()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() {
            return Err(BackendError::Transport(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(BackendError::Config(format!("HTTP {status} from {}", self.url)));
        }
        let reply: ChatReply = resp.json().map_err(|e| BackendError::Transport(format!("malformed reply: {e}")))?;
        Ok(reply.message.content)
    }
}

impl ChatBackend for HttpChat {
    fn chat(&mut self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        let mut delay = Duration::from_millis(250);
        let mut attempt = 0;
        loop {
            match self.attempt(messages) {
                Err(BackendError::Transport(e)) if attempt < self.retries => {
                    log::warn!("chat request failed ({e}); retrying");
                    std::thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}
