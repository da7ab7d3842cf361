use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{latest_user_text, validate_request, ChatBackend, ChatMessage, GatewayError, Role};

/// One canned reply. A keyed entry is only served to a request whose
/// latest user text contains `when`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptEntry {
    Plain(String),
    Keyed { when: String, reply: String },
}

impl ScriptEntry {
    pub fn reply(&self) -> &str {
        match self {
            ScriptEntry::Plain(r) | ScriptEntry::Keyed { reply: r, .. } => r,
        }
    }

    fn matches(&self, user_text: &str) -> bool {
        match self {
            ScriptEntry::Plain(_) => true,
            ScriptEntry::Keyed { when, .. } => user_text.contains(when.as_str()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScriptedTranscript {
    pub entries: Vec<ScriptEntry>,
}

impl ScriptedTranscript {
    pub fn new<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        ScriptedTranscript {
            entries: replies
                .into_iter()
                .map(|r| ScriptEntry::Plain(r.into()))
                .collect(),
        }
    }

    /// Reads a JSON array whose items are strings or `{"when", "reply"}`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| GatewayError::Io(format!("{}: invalid script: {e}", path.display())))
    }
}

#[derive(Debug, Default)]
struct ScriptState {
    used: Vec<bool>,
    served: usize,
    requests: Vec<Vec<ChatMessage>>,
}

/// Replays a [`ScriptedTranscript`]. Each request consumes the earliest
/// unused entry that matches it.
#[derive(Debug)]
pub struct ScriptedBackend {
    script: ScriptedTranscript,
    max_images: usize,
    state: Mutex<ScriptState>,
}

impl ScriptedBackend {
    pub fn new(script: ScriptedTranscript) -> Self {
        let n = script.entries.len();
        ScriptedBackend {
            script,
            max_images: usize::MAX,
            state: Mutex::new(ScriptState {
                used: vec![false; n],
                ..Default::default()
            }),
        }
    }

    pub fn from_replies<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        ScriptedBackend::new(ScriptedTranscript::new(replies))
    }

    pub fn with_max_images(mut self, max_images: usize) -> Self {
        self.max_images = max_images;
        self
    }

    /// Every request received so far, in order.
    pub fn requests(&self) -> Vec<Vec<ChatMessage>> {
        self.state.lock().expect("script state").requests.clone()
    }

    pub fn served(&self) -> usize {
        self.state.lock().expect("script state").served
    }

    pub fn remaining(&self) -> usize {
        let st = self.state.lock().expect("script state");
        st.used.iter().filter(|u| !**u).count()
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, GatewayError> {
        validate_request(messages, self.max_images)?;
        let user = latest_user_text(messages);
        let mut st = self.state.lock().expect("script state");
        st.requests.push(messages.to_vec());
        let hit = self
            .script
            .entries
            .iter()
            .enumerate()
            .find(|(i, e)| !st.used[*i] && e.matches(&user))
            .map(|(i, _)| i);
        match hit {
            Some(i) => {
                st.used[i] = true;
                st.served += 1;
                Ok(self.script.entries[i].reply().to_string())
            }
            None => Err(GatewayError::ScriptExhausted { served: st.served }),
        }
    }

    fn describe(&self) -> String {
        format!("scripted:{} entries", self.script.entries.len())
    }
}

type ReplyFn = dyn Fn(&[ChatMessage]) -> Result<String, GatewayError> + Send + Sync;

/// Backend defined by a closure.
pub struct FnBackend {
    name: String,
    f: Box<ReplyFn>,
}

impl FnBackend {
    pub fn new(
        name: impl Into<String>,
        f: impl Fn(&[ChatMessage]) -> Result<String, GatewayError> + Send + Sync + 'static,
    ) -> Self {
        FnBackend {
            name: name.into(),
            f: Box::new(f),
        }
    }
}

impl ChatBackend for FnBackend {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, GatewayError> {
        validate_request(messages, usize::MAX)?;
        (self.f)(messages)
    }

    fn describe(&self) -> String {
        format!("fn:{}", self.name)
    }
}

/// A model that can only see the answer after taking `k` actions, and
/// always tries to answer as early as it is allowed to.
///
/// Stateless: the action count is the number of earlier assistant turns
/// with an `ACTION:` line, so it needs interleaved request framing.
/// A request following a rejected `ANSWER:` turn (a budget nudge) always
/// gets an action. Selection prompts get `SELECT: 0`.
#[derive(Debug, Clone)]
pub struct HiddenObjectOracle {
    pub k: usize,
    pub answer: String,
    pub decoy: String,
    pub action_verb: String,
}

impl HiddenObjectOracle {
    pub fn new(k: usize, answer: impl Into<String>) -> Self {
        HiddenObjectOracle {
            k,
            answer: answer.into(),
            decoy: "I cannot see it".into(),
            action_verb: "move forward".into(),
        }
    }

    pub fn actions_taken(messages: &[ChatMessage]) -> usize {
        messages
            .iter()
            .filter(|m| m.role == Role::Assistant && has_line(&m.text(), "ACTION:"))
            .count()
    }
}

fn has_line(text: &str, marker: &str) -> bool {
    text.lines().any(|l| l.trim_start().starts_with(marker))
}

impl ChatBackend for HiddenObjectOracle {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, GatewayError> {
        validate_request(messages, usize::MAX)?;
        if latest_user_text(messages).contains("SELECT:") {
            return Ok("SELECT: 0".into());
        }
        let last_assistant = messages.iter().rev().find(|m| m.role == Role::Assistant);
        if let Some(m) = last_assistant {
            if has_line(&m.text(), "ANSWER:") {
                return Ok(format!("THINK: I need to look further.\nACTION: {}", self.action_verb));
            }
        }
        let answer = if Self::actions_taken(messages) >= self.k {
            &self.answer
        } else {
            &self.decoy
        };
        Ok(format!("ANSWER: {answer}"))
    }

    fn describe(&self) -> String {
        format!("hidden-object-oracle:k={}", self.k)
    }
}
