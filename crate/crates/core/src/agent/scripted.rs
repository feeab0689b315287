//! Deterministic agent that answers from a script keyed by request ordinal.
//!
//! Script files are TOML:
//!
//! ```toml
//! [replies]
//! 1 = "STRATEGY: innovate\nINSTRUCTIONS:\nwrite a naive triple loop"
//! 2 = { content = "...", prompt_tokens = 1200, completion_tokens = 300 }
//! 3 = { error = "timeout" }
//! default = "reply used for any ordinal not listed"
//! ```
//!
//! Ordinals count requests to this agent from 1 across the whole run.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use super::{AgentEndpoint, AgentError, ChatBackend, ChatMessage, ChatReply, Usage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScriptedFailure {
    Timeout,
    Unreachable,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptedReply {
    Reply { content: String, usage: Option<Usage> },
    Failure(ScriptedFailure),
}

impl ScriptedReply {
    pub fn text(content: impl Into<String>) -> Self {
        ScriptedReply::Reply {
            content: content.into(),
            usage: None,
        }
    }

    pub fn with_usage(content: impl Into<String>, prompt_tokens: u64, completion_tokens: u64) -> Self {
        ScriptedReply::Reply {
            content: content.into(),
            usage: Some(Usage {
                prompt_tokens,
                completion_tokens,
            }),
        }
    }

    pub fn failure(kind: ScriptedFailure) -> Self {
        ScriptedReply::Failure(kind)
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Entry {
    Text(String),
    Detailed {
        #[serde(default)]
        content: Option<String>,
        #[serde(default)]
        prompt_tokens: Option<u64>,
        #[serde(default)]
        completion_tokens: Option<u64>,
        #[serde(default)]
        error: Option<ScriptedFailure>,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptFile {
    replies: BTreeMap<String, Entry>,
}

fn to_reply(entry: Entry) -> Result<ScriptedReply, String> {
    match entry {
        Entry::Text(content) => Ok(ScriptedReply::text(content)),
        Entry::Detailed { error: Some(kind), .. } => Ok(ScriptedReply::Failure(kind)),
        Entry::Detailed {
            content: Some(content),
            prompt_tokens,
            completion_tokens,
            ..
        } => Ok(ScriptedReply::Reply {
            content,
            usage: match (prompt_tokens, completion_tokens) {
                (Some(p), Some(c)) => Some(Usage {
                    prompt_tokens: p,
                    completion_tokens: c,
                }),
                (None, None) => None,
                _ => return Err("prompt_tokens and completion_tokens must be given together".into()),
            },
        }),
        Entry::Detailed { .. } => Err("entry needs `content` or `error`".into()),
    }
}

#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    replies: BTreeMap<u64, ScriptedReply>,
    default: Option<ScriptedReply>,
    ordinal: u64,
    requests: Vec<Vec<ChatMessage>>,
}

impl ScriptedBackend {
    /// Replies served in order, starting at ordinal 1.
    pub fn new(replies: Vec<ScriptedReply>) -> Self {
        ScriptedBackend {
            replies: (1..).zip(replies).collect(),
            ..Self::default()
        }
    }

    pub fn from_replies<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        Self::new(replies.into_iter().map(ScriptedReply::text).collect())
    }

    pub fn with_default(mut self, reply: ScriptedReply) -> Self {
        self.default = Some(reply);
        self
    }

    pub fn with_reply(mut self, ordinal: u64, reply: ScriptedReply) -> Self {
        self.replies.insert(ordinal, reply);
        self
    }

    pub fn from_toml(text: &str, origin: &str) -> Result<Self, AgentError> {
        let err = |reason: String| AgentError::Script {
            path: origin.to_string(),
            reason,
        };
        let file: ScriptFile = toml::from_str(text).map_err(|e| err(e.to_string()))?;
        let mut backend = ScriptedBackend::default();
        for (key, entry) in file.replies {
            let reply = to_reply(entry).map_err(|e| err(format!("reply `{key}`: {e}")))?;
            if key == "default" {
                backend.default = Some(reply);
            } else {
                let ordinal: u64 = key
                    .parse()
                    .ok()
                    .filter(|n| *n >= 1)
                    .ok_or_else(|| err(format!("reply key `{key}` is neither an ordinal >= 1 nor `default`")))?;
                backend.replies.insert(ordinal, reply);
            }
        }
        Ok(backend)
    }

    pub fn load(path: &Path) -> Result<Self, AgentError> {
        let text = std::fs::read_to_string(path).map_err(|e| AgentError::Script {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::from_toml(&text, &path.display().to_string())
    }

    /// Message lists received so far, in order.
    pub fn requests(&self) -> &[Vec<ChatMessage>] {
        &self.requests
    }

    /// Number of requests served, including those before a resume.
    pub fn ordinal(&self) -> u64 {
        self.ordinal
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&mut self, endpoint: &AgentEndpoint, messages: &[ChatMessage]) -> Result<ChatReply, AgentError> {
        self.ordinal += 1;
        self.requests.push(messages.to_vec());
        let reply = self
            .replies
            .get(&self.ordinal)
            .or(self.default.as_ref())
            .ok_or(AgentError::ScriptExhausted(self.ordinal))?;
        match reply {
            ScriptedReply::Reply { content, usage } => Ok(ChatReply {
                content: content.clone(),
                usage: *usage,
            }),
            ScriptedReply::Failure(ScriptedFailure::Timeout) => Err(AgentError::Timeout(endpoint.timeout)),
            ScriptedReply::Failure(ScriptedFailure::Unreachable) => {
                Err(AgentError::Unreachable("scripted outage".into()))
            }
        }
    }

    fn resume_at(&mut self, completed: u64) {
        self.ordinal = completed;
    }
}

#[cfg(test)]
mod tests {
    use std::time::Duration;

    use super::*;

    fn endpoint() -> AgentEndpoint {
        AgentEndpoint {
            base_url: "scripted".into(),
            model: "mock".into(),
            temperature: 0.7,
            timeout: Duration::from_secs(3),
            max_context: 1000,
        }
    }

    #[test]
    fn toml_script_by_ordinal_with_default() {
        let script = r#"
            [replies]
            1 = "first"
            3 = { content = "third", prompt_tokens = 10, completion_tokens = 2 }
            4 = { error = "timeout" }
            default = "fallback"
        "#;
        let mut b = ScriptedBackend::from_toml(script, "inline").unwrap();
        let ep = endpoint();
        assert_eq!(b.complete(&ep, &[]).unwrap().content, "first");
        assert_eq!(b.complete(&ep, &[]).unwrap().content, "fallback");
        let third = b.complete(&ep, &[]).unwrap();
        assert_eq!(third.usage, Some(Usage { prompt_tokens: 10, completion_tokens: 2 }));
        assert!(matches!(b.complete(&ep, &[]), Err(AgentError::Timeout(_))));
    }

    #[test]
    fn exhausted_script_is_fatal() {
        let mut b = ScriptedBackend::from_replies(["only"]);
        let ep = endpoint();
        b.complete(&ep, &[]).unwrap();
        let err = b.complete(&ep, &[]).unwrap_err();
        assert!(matches!(err, AgentError::ScriptExhausted(2)));
        assert!(err.is_fatal());
    }

    #[test]
    fn resume_skips_served_ordinals() {
        let mut b = ScriptedBackend::from_replies(["a", "b", "c"]);
        b.resume_at(2);
        assert_eq!(b.complete(&endpoint(), &[]).unwrap().content, "c");
    }

    #[test]
    fn bad_keys_rejected() {
        let err = ScriptedBackend::from_toml("[replies]\nzero = \"x\"\n", "inline").unwrap_err();
        assert!(err.to_string().contains("zero"));
        assert!(ScriptedBackend::from_toml("[replies]\n0 = \"x\"\n", "inline").is_err());
    }
}
