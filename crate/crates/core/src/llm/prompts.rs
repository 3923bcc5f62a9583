use super::schema::{schema_for, SchemaKind};
use super::{LlmError, Subtask};
use crate::canonical;
use crate::context::{CategoryKind, ContextPayload, HistoryQueue};
use crate::engine::TaskType;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::collections::BTreeSet;
use std::fmt::Write;

/// Bumped whenever a template or bundled schema changes; recorded
/// transcripts only replay against the version they were made with.
pub const TEMPLATE_VERSION: &str = "prompts-v1";

const INITIAL: &str = include_str!("../../assets/prompts/initial.txt");
const CREATE: &str = include_str!("../../assets/prompts/create.txt");
const ANIMATE: &str = include_str!("../../assets/prompts/animate.txt");
const FUSE: &str = include_str!("../../assets/prompts/fuse.txt");
const CONVERSE: &str = include_str!("../../assets/prompts/converse.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Initial,
    Refined,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PromptEnvelope {
    pub stage: Stage,
    pub template_version: String,
    pub task_type: Option<TaskType>,
    pub system_text: String,
    pub user_text: String,
    pub schema: Value,
    pub context_sections: Option<ContextPayload>,
    pub history: Vec<String>,
}

impl PromptEnvelope {
    /// Hex SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(canonical::to_string(self).as_bytes());
        hash.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    /// System message with the schema appended, for providers that take
    /// plain chat messages.
    pub fn system_message(&self) -> String {
        format!("{}\nJSON schema:\n{}\n", self.system_text, canonical::value_to_string(&self.schema))
    }

    /// User message: history, context sections, then the request.
    pub fn user_message(&self) -> String {
        let mut out = String::new();
        if self.stage == Stage::Initial {
            out.push_str("Recent messages, oldest first:\n");
            for (i, m) in self.history.iter().enumerate() {
                let _ = writeln!(out, "{} | {}", i + 1, m);
            }
            out.push('\n');
        }
        if let Some(payload) = &self.context_sections {
            out.push_str("Context:\n");
            out.push_str(&payload.render());
            out.push('\n');
        }
        out.push_str("Request: ");
        out.push_str(&self.user_text);
        out
    }

    /// Every piece of prompt text the provider sees.
    pub fn full_text(&self) -> String {
        format!("{}\n{}", self.system_message(), self.user_message())
    }
}

fn category_table() -> String {
    let mut out = String::from("Categories and their properties:\n");
    for kind in CategoryKind::ALL {
        let props: Vec<&str> = kind.allowed_properties().iter().map(|p| p.as_str()).collect();
        let _ = writeln!(out, "- {}: {}", kind.as_str(), if props.is_empty() { "(none)".into() } else { props.join(", ") });
    }
    out
}

/// History must already include `text` as its newest entry.
pub fn build_initial_prompt(text: &str, history: &HistoryQueue) -> PromptEnvelope {
    PromptEnvelope {
        stage: Stage::Initial,
        template_version: TEMPLATE_VERSION.into(),
        task_type: None,
        system_text: INITIAL.replace("{{categories}}", &category_table()),
        user_text: text.to_string(),
        schema: schema_for(SchemaKind::Decomposition).clone(),
        context_sections: None,
        history: history.messages(),
    }
}

pub fn build_refined_prompt(subtask: &Subtask, payload: &ContextPayload) -> Result<PromptEnvelope, LlmError> {
    let expected: BTreeSet<CategoryKind> = subtask.categories.iter().map(|c| c.kind).collect();
    let found = payload.kinds();
    if expected != found {
        return Err(LlmError::CategoryMismatch {
            expected: expected.into_iter().collect(),
            found: found.into_iter().collect(),
        });
    }
    let system_text = match subtask.task_type {
        TaskType::Create => CREATE,
        TaskType::Animate => ANIMATE,
        TaskType::Fuse => FUSE,
        TaskType::Converse => CONVERSE,
    };
    Ok(PromptEnvelope {
        stage: Stage::Refined,
        template_version: TEMPLATE_VERSION.into(),
        task_type: Some(subtask.task_type),
        system_text: system_text.to_string(),
        user_text: subtask.paraphrased_request.clone(),
        schema: schema_for(SchemaKind::Task(subtask.task_type)).clone(),
        context_sections: Some(payload.clone()),
        history: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::{ContextCategory, Property};
    use std::collections::BTreeMap;

    #[test]
    fn initial_prompt_carries_history_in_order() {
        let mut history = HistoryQueue::default();
        for i in 0..10 {
            history.record_message(format!("message {i}"));
        }
        let env = build_initial_prompt("message 9", &history);
        assert_eq!(env.history.len(), 10);
        assert_eq!(env.history[0], "message 0");
        assert!(env.user_message().contains("10 | message 9"));
        assert_eq!(env.digest(), build_initial_prompt("message 9", &history).digest());
        assert_eq!(env.digest().len(), 64);
    }

    #[test]
    fn empty_history_section() {
        let env = build_initial_prompt("hello", &HistoryQueue::default());
        assert!(env.history.is_empty());
        assert!(env.user_message().starts_with("Recent messages, oldest first:\n\nRequest: hello"));
    }

    #[test]
    fn refined_prompt_embeds_sections_verbatim() {
        let subtask = Subtask {
            task_type: TaskType::Create,
            paraphrased_request: "place a desk".into(),
            categories: vec![ContextCategory::new(CategoryKind::Resources, &[]).unwrap()],
        };
        let payload = ContextPayload::from_sections(BTreeMap::from([(CategoryKind::Resources, "desk\nchair\nlamp\n".to_string())]));
        let env = build_refined_prompt(&subtask, &payload).unwrap();
        assert!(env.user_message().contains("[resources]\ndesk\nchair\nlamp\n"));
        assert_eq!(env.schema, *schema_for(SchemaKind::Task(TaskType::Create)));

        let wrong = ContextPayload::from_sections(BTreeMap::from([(CategoryKind::History, String::new())]));
        assert!(matches!(build_refined_prompt(&subtask, &wrong), Err(LlmError::CategoryMismatch { .. })));
    }

    #[test]
    fn refined_prompt_with_two_sections() {
        let subtask = Subtask {
            task_type: TaskType::Animate,
            paraphrased_request: "spin cube_1".into(),
            categories: vec![
                ContextCategory::new(CategoryKind::Animations, &[]).unwrap(),
                ContextCategory::new(CategoryKind::VirtualObjects, &[Property::Position]).unwrap(),
            ],
        };
        let payload = ContextPayload::from_sections(BTreeMap::from([
            (CategoryKind::Animations, String::new()),
            (CategoryKind::VirtualObjects, "cube_1 | position=(0.000,0.000,0.000)\n".to_string()),
        ]));
        let env = build_refined_prompt(&subtask, &payload).unwrap();
        let sections = env.context_sections.unwrap();
        assert_eq!(sections.kinds().len(), 2);
    }
}
