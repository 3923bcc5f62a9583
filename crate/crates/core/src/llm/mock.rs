use super::{Completion, LlmError, LlmProvider, PromptEnvelope};
use crate::context::estimate_tokens;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, VecDeque};

/// One recorded exchange, keyed by the digest of the prompt that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub envelope_digest: String,
    pub response_text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    /// Free-form reviewer hint; ignored on replay.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Deterministic provider that answers only prompts it has seen before.
#[derive(Debug, Clone, Default)]
pub struct ScriptedMock {
    entries: BTreeMap<String, TranscriptEntry>,
}

impl ScriptedMock {
    pub fn new(entries: Vec<TranscriptEntry>) -> Result<Self, String> {
        let mut map: BTreeMap<String, TranscriptEntry> = BTreeMap::new();
        for entry in entries {
            if let Some(existing) = map.get(&entry.envelope_digest) {
                if existing.response_text != entry.response_text {
                    return Err(format!("digest {} has two different responses", entry.envelope_digest));
                }
                continue;
            }
            map.insert(entry.envelope_digest.clone(), entry);
        }
        Ok(ScriptedMock { entries: map })
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let entries: Vec<TranscriptEntry> = serde_json::from_str(text).map_err(|e| format!("transcript: {e}"))?;
        Self::new(entries)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl LlmProvider for ScriptedMock {
    fn complete(&mut self, envelope: &PromptEnvelope) -> Result<Completion, LlmError> {
        let digest = envelope.digest();
        let entry = self.entries.get(&digest).ok_or(LlmError::TranscriptMiss { digest })?;
        Ok(Completion {
            text: entry.response_text.clone(),
            input_tokens: entry.input_tokens,
            output_tokens: entry.output_tokens,
        })
    }
}

/// A canned reply for recording. Token counts default to the byte
/// estimate of the prompt and the reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedReply {
    pub text: String,
    #[serde(default)]
    pub input_tokens: Option<u64>,
    #[serde(default)]
    pub output_tokens: Option<u64>,
}

impl ScriptedReply {
    pub fn text(text: impl Into<String>) -> Self {
        ScriptedReply { text: text.into(), input_tokens: None, output_tokens: None }
    }
}

/// Hands out replies in order and writes down which prompt each answered,
/// producing a transcript a [`ScriptedMock`] can replay.
#[derive(Debug, Clone, Default)]
pub struct RecordingProvider {
    replies: VecDeque<ScriptedReply>,
    entries: Vec<TranscriptEntry>,
}

impl RecordingProvider {
    pub fn new(replies: impl IntoIterator<Item = ScriptedReply>) -> Self {
        RecordingProvider { replies: replies.into_iter().collect(), entries: Vec::new() }
    }

    pub fn push(&mut self, reply: ScriptedReply) {
        self.replies.push_back(reply);
    }

    pub fn remaining(&self) -> usize {
        self.replies.len()
    }

    pub fn transcript(&self) -> &[TranscriptEntry] {
        &self.entries
    }

    pub fn into_transcript(self) -> Vec<TranscriptEntry> {
        self.entries
    }
}

impl LlmProvider for RecordingProvider {
    fn complete(&mut self, envelope: &PromptEnvelope) -> Result<Completion, LlmError> {
        let reply = self
            .replies
            .pop_front()
            .ok_or_else(|| LlmError::ProviderUnavailable("no scripted reply left to record".into()))?;
        let input_tokens = reply.input_tokens.unwrap_or_else(|| estimate_tokens(&envelope.full_text()) as u64);
        let output_tokens = reply.output_tokens.unwrap_or_else(|| estimate_tokens(&reply.text) as u64);
        let stage = match envelope.task_type {
            Some(t) => format!("refined/{t}"),
            None => "initial".into(),
        };
        self.entries.push(TranscriptEntry {
            envelope_digest: envelope.digest(),
            response_text: reply.text.clone(),
            input_tokens,
            output_tokens,
            note: Some(format!("{stage}: {}", envelope.user_text)),
        });
        Ok(Completion { text: reply.text, input_tokens, output_tokens })
    }
}
