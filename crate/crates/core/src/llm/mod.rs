//! Two-stage request pipeline: an initial call splits a request into
//! subtasks and names the context each needs; one refined call per subtask
//! returns a schema-checked command.

mod extract;
mod mock;
mod pipeline;
mod prompts;
mod schema;
mod usage;

pub use extract::{extract_json, speech_text};
pub use mock::{RecordingProvider, ScriptedMock, ScriptedReply, TranscriptEntry};
pub use pipeline::{commit, handle_request, parse_initial_response, parse_refined_response, Pipeline, RequestOutcome};
pub use prompts::{build_initial_prompt, build_refined_prompt, PromptEnvelope, Stage, TEMPLATE_VERSION};
pub use schema::{schema_for, validate, SchemaKind};
pub use usage::{TokenUsage, UsageLedger, UsageTotals};

use crate::context::{CategoryKind, ContextCategory};
use crate::engine::TaskType;
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("no JSON object found in the response")]
    NoJsonFound,
    #[error("schema violation at {path:?}: {message}")]
    SchemaViolation { path: String, message: String },
    #[error("context sections {found:?} do not match the requested {expected:?}")]
    CategoryMismatch { expected: Vec<CategoryKind>, found: Vec<CategoryKind> },
    #[error("provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("no scripted response for envelope {digest}")]
    TranscriptMiss { digest: String },
}

/// One piece of an initial-stage decomposition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Subtask {
    pub task_type: TaskType,
    pub paraphrased_request: String,
    pub categories: Vec<ContextCategory>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskDecomposition {
    pub subtasks: Vec<Subtask>,
}

/// A validated refined-stage response.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommandEnvelope {
    pub task_type: TaskType,
    pub payload: Value,
    pub speech_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Completion {
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

pub trait LlmProvider {
    fn complete(&mut self, envelope: &PromptEnvelope) -> Result<Completion, LlmError>;

    /// Whether the provider can enforce the envelope schema itself. Client
    /// side validation runs either way.
    fn structured_output(&self) -> bool {
        false
    }
}

impl<P: LlmProvider + ?Sized> LlmProvider for &mut P {
    fn complete(&mut self, envelope: &PromptEnvelope) -> Result<Completion, LlmError> {
        (**self).complete(envelope)
    }

    fn structured_output(&self) -> bool {
        (**self).structured_output()
    }
}

impl<P: LlmProvider + ?Sized> LlmProvider for Box<P> {
    fn complete(&mut self, envelope: &PromptEnvelope) -> Result<Completion, LlmError> {
        (**self).complete(envelope)
    }

    fn structured_output(&self) -> bool {
        (**self).structured_output()
    }
}
