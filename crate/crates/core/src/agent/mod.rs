//! Strategist and implementor agents over a chat-completion protocol.

mod http;
mod parse;
mod prompt;
mod scripted;

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::HttpBackend;
pub use parse::{extract_code_block, parse_decision, parse_strategy, render_decision};
pub use prompt::{
    assemble_strategist_prompt, implementor_task, StrategistRequest, INNOVATE_PRIORITY_DIRECTIVE,
    INNOVATE_PRIORITY_ITERATIONS,
};
pub use scripted::{ScriptedBackend, ScriptedFailure, ScriptedReply};

use crate::validation::Reviser;

/// Sampling strategy chosen by the strategist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Refine,
    Combine,
    Innovate,
    /// The reply could not be parsed or no reply was received.
    NotAvailable,
}

impl Strategy {
    pub const CHOICES: [Strategy; 3] = [Strategy::Refine, Strategy::Combine, Strategy::Innovate];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Refine => "refine",
            Strategy::Combine => "combine",
            Strategy::Innovate => "innovate",
            Strategy::NotAvailable => "not-available",
        }
    }

    pub fn is_available(self) -> bool {
        self != Strategy::NotAvailable
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

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
        ChatMessage {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// Connection settings for one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentEndpoint {
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    pub timeout: Duration,
    /// Context window in tokens; prompts are trimmed to fit.
    pub max_context: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StrategistDecision {
    pub strategy: Strategy,
    pub instructions: String,
    pub raw_response: String,
}

impl StrategistDecision {
    pub fn not_available(raw_response: impl Into<String>) -> Self {
        StrategistDecision {
            strategy: Strategy::NotAvailable,
            instructions: String::new(),
            raw_response: raw_response.into(),
        }
    }
}

/// Token counts reported by an endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatReply {
    pub content: String,
    pub usage: Option<Usage>,
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("request timed out after {0:?}")]
    Timeout(Duration),
    #[error("endpoint unreachable: {0}")]
    Unreachable(String),
    #[error("endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed reply: {0}")]
    Decode(String),
    #[error("script has no reply for request #{0}")]
    ScriptExhausted(u64),
    #[error("script {path}: {reason}")]
    Script { path: String, reason: String },
}

impl AgentError {
    /// Fatal errors abort the run; the rest only cost the current iteration.
    pub fn is_fatal(&self) -> bool {
        match self {
            AgentError::Timeout(_) | AgentError::Decode(_) => false,
            AgentError::Status { status, .. } => (400..500).contains(status) && *status != 408 && *status != 429,
            AgentError::Unreachable(_) | AgentError::ScriptExhausted(_) | AgentError::Script { .. } => true,
        }
    }
}

/// A chat-completion transport.
pub trait ChatBackend {
    fn complete(&mut self, endpoint: &AgentEndpoint, messages: &[ChatMessage]) -> Result<ChatReply, AgentError>;

    /// Informs the backend that `completed` requests were already served in
    /// an earlier session (used when resuming a run).
    fn resume_at(&mut self, completed: u64) {
        let _ = completed;
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for Box<B> {
    fn complete(&mut self, endpoint: &AgentEndpoint, messages: &[ChatMessage]) -> Result<ChatReply, AgentError> {
        (**self).complete(endpoint, messages)
    }

    fn resume_at(&mut self, completed: u64) {
        (**self).resume_at(completed)
    }
}

/// Token estimate used when an endpoint does not report usage.
pub fn estimate_tokens(bytes: usize) -> u64 {
    bytes.div_ceil(4) as u64
}

/// Accumulated usage of one agent within an iteration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TurnUsage {
    pub input: u64,
    pub output: u64,
    pub estimated: bool,
    pub calls: u32,
}

impl TurnUsage {
    fn add(&mut self, messages: &[ChatMessage], reply: &ChatReply) {
        match reply.usage {
            Some(u) => {
                self.input += u.prompt_tokens;
                self.output += u.completion_tokens;
            }
            None => {
                let sent: usize = messages.iter().map(|m| m.content.len()).sum();
                self.input += estimate_tokens(sent);
                self.output += estimate_tokens(reply.content.len());
                self.estimated = true;
            }
        }
    }
}

/// Result of one strategist consultation. The transcript holds the prompt
/// even when the request failed.
#[derive(Debug)]
pub struct StrategistTurn {
    pub outcome: Result<StrategistDecision, AgentError>,
    pub transcript: Vec<ChatMessage>,
    pub usage: TurnUsage,
}

/// Asks the strategist for a decision on a fresh conversation.
pub fn strategist_decide(
    backend: &mut dyn ChatBackend,
    endpoint: &AgentEndpoint,
    request: &StrategistRequest<'_>,
) -> StrategistTurn {
    let mut transcript = assemble_strategist_prompt(request, endpoint.max_context);
    let mut usage = TurnUsage {
        calls: 1,
        ..TurnUsage::default()
    };
    let outcome = backend.complete(endpoint, &transcript).map(|reply| {
        usage.add(&transcript, &reply);
        transcript.push(ChatMessage::assistant(reply.content.clone()));
        parse_decision(&reply.content)
    });
    StrategistTurn {
        outcome,
        transcript,
        usage,
    }
}

/// A persistent implementor conversation for one iteration. Dropping the
/// session discards the context.
pub struct ImplementorSession<'a> {
    backend: &'a mut dyn ChatBackend,
    endpoint: &'a AgentEndpoint,
    messages: Vec<ChatMessage>,
    usage: TurnUsage,
}

impl<'a> ImplementorSession<'a> {
    pub fn new(backend: &'a mut dyn ChatBackend, endpoint: &'a AgentEndpoint, system_prompt: impl Into<String>) -> Self {
        ImplementorSession {
            backend,
            endpoint,
            messages: vec![ChatMessage::system(system_prompt)],
            usage: TurnUsage::default(),
        }
    }

    /// Sends the initial task and returns the first fenced code block of the
    /// reply, if any.
    pub fn generate(&mut self, task: impl Into<String>) -> Result<Option<String>, AgentError> {
        self.exchange(task.into())
    }

    /// Sends failure feedback within the same conversation.
    pub fn revise(&mut self, feedback: &str) -> Result<Option<String>, AgentError> {
        self.exchange(feedback.to_string())
    }

    fn exchange(&mut self, user: String) -> Result<Option<String>, AgentError> {
        self.messages.push(ChatMessage::user(user));
        self.usage.calls += 1;
        let reply = self.backend.complete(self.endpoint, &self.messages)?;
        self.usage.add(&self.messages, &reply);
        let code = extract_code_block(&reply.content);
        self.messages.push(ChatMessage::assistant(reply.content));
        Ok(code)
    }

    pub fn transcript(&self) -> &[ChatMessage] {
        &self.messages
    }

    pub fn usage(&self) -> TurnUsage {
        self.usage
    }

    pub fn into_parts(self) -> (Vec<ChatMessage>, TurnUsage) {
        (self.messages, self.usage)
    }
}

impl Reviser for ImplementorSession<'_> {
    fn revise(&mut self, feedback: &str) -> Result<Option<String>, AgentError> {
        ImplementorSession::revise(self, feedback)
    }
}
