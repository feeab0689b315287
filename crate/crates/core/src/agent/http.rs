//! Blocking client for OpenAI-compatible `/v1/chat/completions` endpoints.

use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{AgentEndpoint, AgentError, ChatBackend, ChatMessage, ChatReply, Usage};

const CONNECT_ATTEMPTS: u32 = 3;

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    stream: bool,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct Choice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    prompt_tokens: Option<u64>,
    completion_tokens: Option<u64>,
}

/// Serialized request body.
pub fn request_body(endpoint: &AgentEndpoint, messages: &[ChatMessage]) -> String {
    serde_json::to_string(&CompletionRequest {
        model: &endpoint.model,
        messages,
        temperature: endpoint.temperature,
        stream: false,
    })
    .expect("request serializes")
}

/// Extracts the assistant content and optional usage from a response body.
pub fn parse_completion(body: &str) -> Result<ChatReply, AgentError> {
    let response: CompletionResponse =
        serde_json::from_str(body).map_err(|e| AgentError::Decode(e.to_string()))?;
    let choice = response
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| AgentError::Decode("response has no choices".into()))?;
    let usage = response.usage.and_then(|u| match (u.prompt_tokens, u.completion_tokens) {
        (Some(p), Some(c)) => Some(Usage {
            prompt_tokens: p,
            completion_tokens: c,
        }),
        _ => None,
    });
    Ok(ChatReply {
        content: choice.message.content.unwrap_or_default(),
        usage,
    })
}

pub struct HttpBackend {
    client: reqwest::blocking::Client,
    api_key: Option<String>,
}

impl HttpBackend {
    pub fn new(api_key: Option<String>) -> Result<Self, AgentError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| AgentError::Unreachable(e.to_string()))?;
        Ok(HttpBackend {
            client,
            api_key: api_key.filter(|k| !k.is_empty()),
        })
    }

    fn send_once(&self, endpoint: &AgentEndpoint, body: &str) -> Result<ChatReply, AgentError> {
        let url = format!("{}/v1/chat/completions", endpoint.base_url.trim_end_matches('/'));
        let mut request = self
            .client
            .post(url)
            .timeout(endpoint.timeout)
            .header("content-type", "application/json")
            .body(body.to_string());
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| classify(e, endpoint.timeout))?;
        let status = response.status();
        let text = response.text().map_err(|e| classify(e, endpoint.timeout))?;
        if !status.is_success() {
            return Err(AgentError::Status {
                status: status.as_u16(),
                body: text,
            });
        }
        parse_completion(&text)
    }
}

fn classify(err: reqwest::Error, timeout: Duration) -> AgentError {
    if err.is_timeout() {
        AgentError::Timeout(timeout)
    } else if err.is_connect() {
        AgentError::Unreachable(err.to_string())
    } else {
        AgentError::Decode(err.to_string())
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&mut self, endpoint: &AgentEndpoint, messages: &[ChatMessage]) -> Result<ChatReply, AgentError> {
        let body = request_body(endpoint, messages);
        let mut attempt = 1;
        loop {
            match self.send_once(endpoint, &body) {
                Err(AgentError::Unreachable(msg)) if attempt < CONNECT_ATTEMPTS => {
                    log::warn!("chat endpoint unreachable (attempt {attempt}/{CONNECT_ATTEMPTS}): {msg}");
                    thread::sleep(Duration::from_secs(u64::from(attempt)));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}
