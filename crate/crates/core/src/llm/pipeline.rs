use super::extract::{extract_json, speech_text};
use super::prompts::{build_initial_prompt, build_refined_prompt, Stage};
use super::schema::{validate, SchemaKind};
use super::usage::{TokenUsage, UsageLedger, UsageTotals};
use super::{CommandEnvelope, LlmError, LlmProvider, Subtask, TaskDecomposition};
use crate::context::{ContextCategory, ContextPayload, HistoryQueue};
use crate::engine::{DispatchReport, Engine, TaskType};
use serde::Serialize;
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::time::Instant;

/// Extracts and validates the subtask list. A bare array is taken as the
/// subtask list itself.
pub fn parse_initial_response(text: &str) -> Result<TaskDecomposition, LlmError> {
    let (value, _, _) = extract_json(text).ok_or(LlmError::NoJsonFound)?;
    let value = match value {
        Value::Array(items) => json!({ "subtasks": items }),
        other => other,
    };
    validate(SchemaKind::Decomposition, &value)?;
    let mut subtasks = Vec::new();
    for (i, raw) in value["subtasks"].as_array().expect("validated").iter().enumerate() {
        let task_type = TaskType::parse(raw["task_type"].as_str().expect("validated")).expect("validated enum");
        let mut categories = Vec::new();
        for (j, c) in raw["categories"].as_array().expect("validated").iter().enumerate() {
            let props: Vec<String> = c
                .get("properties")
                .and_then(Value::as_array)
                .map(|ps| ps.iter().filter_map(Value::as_str).map(str::to_string).collect())
                .unwrap_or_default();
            let category = ContextCategory::parse(c["kind"].as_str().expect("validated"), &props).map_err(|e| {
                LlmError::SchemaViolation { path: format!("/subtasks/{i}/categories/{j}/properties"), message: e.to_string() }
            })?;
            categories.push(category);
        }
        subtasks.push(Subtask {
            task_type,
            paraphrased_request: raw["paraphrased_request"].as_str().expect("validated").to_string(),
            categories,
        });
    }
    Ok(TaskDecomposition { subtasks })
}

/// Validates a refined response against its task schema and splits off the
/// conversational text. Plain prose is accepted only for `converse`.
pub fn parse_refined_response(text: &str, task_type: TaskType) -> Result<CommandEnvelope, LlmError> {
    match extract_json(text) {
        None if task_type == TaskType::Converse => {
            let speech = speech_text(text, None).ok_or(LlmError::NoJsonFound)?;
            Ok(CommandEnvelope { task_type, payload: json!({ "reply": speech }), speech_text: Some(speech) })
        }
        None => Err(LlmError::NoJsonFound),
        Some((payload, start, end)) => {
            validate(SchemaKind::Task(task_type), &payload)?;
            let mut speech = speech_text(text, Some((start, end)));
            if task_type == TaskType::Converse {
                let reply = payload["reply"].as_str().and_then(|r| speech_text(r, None));
                speech = match (reply, speech) {
                    (Some(r), Some(s)) => Some(format!("{r} {s}")),
                    (r, s) => r.or(s),
                };
            }
            Ok(CommandEnvelope { task_type, payload, speech_text: speech })
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RequestOutcome {
    pub request_id: String,
    pub decomposition: Option<TaskDecomposition>,
    /// Commands that validated and applied cleanly, in subtask order.
    pub executed: Vec<CommandEnvelope>,
    pub reports: Vec<DispatchReport>,
    pub speech: Vec<String>,
    pub warnings: Vec<String>,
    pub calls: Vec<TokenUsage>,
    pub usage: UsageTotals,
    #[serde(skip)]
    pub elapsed_ms: f64,
}

fn totals(request_id: &str, calls: &[TokenUsage]) -> UsageTotals {
    UsageTotals {
        request_id: request_id.to_string(),
        input_tokens: calls.iter().map(|c| c.input_tokens).sum(),
        output_tokens: calls.iter().map(|c| c.output_tokens).sum(),
        calls: calls.len() as u64,
    }
}

/// Runs both stages against a private copy of `engine`, so provider
/// failures never reach the live scene. Commands are not applied to
/// `engine`; pass the outcome to [`commit`] for that.
///
/// `history` gains `text` before the initial prompt is built.
pub fn handle_request<P: LlmProvider + ?Sized>(
    provider: &mut P,
    engine: &Engine,
    history: &mut HistoryQueue,
    request_id: &str,
    text: &str,
) -> Result<RequestOutcome, (LlmError, Vec<TokenUsage>)> {
    let started = Instant::now();
    history.record_message(text);
    let mut calls = Vec::new();
    let mut outcome = RequestOutcome {
        request_id: request_id.to_string(),
        decomposition: None,
        executed: Vec::new(),
        reports: Vec::new(),
        speech: Vec::new(),
        warnings: Vec::new(),
        calls: Vec::new(),
        usage: UsageTotals::default(),
        elapsed_ms: 0.0,
    };

    let initial = build_initial_prompt(text, history);
    let reply = match provider.complete(&initial) {
        Ok(r) => r,
        Err(e) => return Err((e, calls)),
    };
    calls.push(TokenUsage {
        request_id: request_id.into(),
        input_tokens: reply.input_tokens,
        output_tokens: reply.output_tokens,
        stage: Stage::Initial,
    });

    match parse_initial_response(&reply.text) {
        Err(e) => outcome.warnings.push(format!("initial response rejected: {e}")),
        Ok(decomposition) => {
            let mut staging = engine.clone();
            for (i, subtask) in decomposition.subtasks.iter().enumerate() {
                let label = format!("subtask {} ({})", i + 1, subtask.task_type);
                let payload = if subtask.categories.is_empty() {
                    ContextPayload::from_sections(BTreeMap::new())
                } else {
                    match staging.retrieve_context(&subtask.categories, history) {
                        Ok(p) => p,
                        Err(e) => {
                            outcome.warnings.push(format!("{label} skipped: {e}"));
                            continue;
                        }
                    }
                };
                let envelope = match build_refined_prompt(subtask, &payload) {
                    Ok(env) => env,
                    Err(e) => {
                        outcome.warnings.push(format!("{label} skipped: {e}"));
                        continue;
                    }
                };
                let reply = match provider.complete(&envelope) {
                    Ok(r) => r,
                    Err(e) => return Err((e, calls)),
                };
                calls.push(TokenUsage {
                    request_id: request_id.into(),
                    input_tokens: reply.input_tokens,
                    output_tokens: reply.output_tokens,
                    stage: Stage::Refined,
                });
                let command = match parse_refined_response(&reply.text, subtask.task_type) {
                    Ok(c) => c,
                    Err(e) => {
                        outcome.warnings.push(format!("{label} rejected: {e}"));
                        continue;
                    }
                };
                match staging.dispatch(command.task_type, &command.payload) {
                    Ok(report) => {
                        if let Some(s) = &command.speech_text {
                            outcome.speech.push(s.clone());
                        }
                        outcome.reports.push(report);
                        outcome.executed.push(command);
                    }
                    Err(e) => outcome.warnings.push(format!("{label} rejected: {e}")),
                }
            }
            outcome.decomposition = Some(decomposition);
        }
    }
    for w in &outcome.warnings {
        log::warn!("{request_id}: {w}");
    }
    outcome.usage = totals(request_id, &calls);
    outcome.calls = calls;
    outcome.elapsed_ms = started.elapsed().as_secs_f64() * 1000.0;
    Ok(outcome)
}

/// Applies validated commands to the live engine in order. Returns warnings
/// for commands the live state no longer accepts.
pub fn commit(engine: &mut Engine, outcome: &RequestOutcome) -> Vec<String> {
    let mut warnings = Vec::new();
    for command in &outcome.executed {
        if let Err(e) = engine.dispatch(command.task_type, &command.payload) {
            warnings.push(format!("{} command no longer applies: {e}", command.task_type));
        }
    }
    warnings
}

/// A provider plus the usage ledger and request numbering.
pub struct Pipeline<P> {
    provider: P,
    ledger: UsageLedger,
    next_request: u64,
}

impl<P: LlmProvider> Pipeline<P> {
    pub fn new(provider: P) -> Self {
        Pipeline { provider, ledger: UsageLedger::new(), next_request: 1 }
    }

    pub fn provider(&self) -> &P {
        &self.provider
    }

    pub fn provider_mut(&mut self) -> &mut P {
        &mut self.provider
    }

    pub fn into_provider(self) -> P {
        self.provider
    }

    pub fn ledger(&self) -> &UsageLedger {
        &self.ledger
    }

    pub fn next_request_id(&mut self) -> String {
        let id = format!("req-{}", self.next_request);
        self.next_request += 1;
        id
    }

    /// Both stages, then commit to `engine`. On provider failure the engine
    /// is untouched and the error returned.
    pub fn handle(&mut self, engine: &mut Engine, history: &mut HistoryQueue, text: &str) -> Result<RequestOutcome, LlmError> {
        let id = self.next_request_id();
        let mut outcome = self.plan(engine, history, &id, text)?;
        let late = commit(engine, &outcome);
        outcome.warnings.extend(late);
        Ok(outcome)
    }

    /// Both stages against a copy of `engine`; nothing is committed.
    pub fn plan(&mut self, engine: &Engine, history: &mut HistoryQueue, request_id: &str, text: &str) -> Result<RequestOutcome, LlmError> {
        match handle_request(&mut self.provider, engine, history, request_id, text) {
            Ok(outcome) => {
                self.ledger.account_usage(request_id, &outcome.calls);
                Ok(outcome)
            }
            Err((e, calls)) => {
                self.ledger.account_usage(request_id, &calls);
                log::warn!("{request_id}: request failed: {e}");
                Err(e)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{RecordingProvider, ScriptedMock, ScriptedReply};

    fn reply(text: &str, i: u64, o: u64) -> ScriptedReply {
        ScriptedReply { text: text.into(), input_tokens: Some(i), output_tokens: Some(o) }
    }

    const RED_CUBE_PLAN: &str = r#"{"subtasks":[{"task_type":"create","paraphrased_request":"create a red cube","categories":[{"kind":"resources"}]}]}"#;

    #[test]
    fn red_cube_end_to_end() {
        let mut engine = Engine::default();
        let mut history = HistoryQueue::default();
        let mut pipeline = Pipeline::new(RecordingProvider::new([
            reply(RED_CUBE_PLAN, 3000, 60),
            reply(r#"Here it is. {"objects":[{"name":"cube_red_1","primitive":"cube","color":"red"}]}"#, 200, 20),
        ]));
        let outcome = pipeline.handle(&mut engine, &mut history, "create a red cube").unwrap();
        assert_eq!(outcome.executed.len(), 1);
        assert_eq!(outcome.speech, ["Here it is."]);
        assert_eq!((outcome.usage.input_tokens, outcome.usage.output_tokens, outcome.usage.calls), (3200, 80, 2));
        assert!(engine.scene().id_of("cube_red_1").is_some());

        // the recorded transcript replays through the mock
        let transcript = pipeline.into_provider().into_transcript();
        let mut replay_engine = Engine::default();
        let mut replay_history = HistoryQueue::default();
        let mut replay = Pipeline::new(ScriptedMock::new(transcript).unwrap());
        replay.handle(&mut replay_engine, &mut replay_history, "create a red cube").unwrap();
        assert_eq!(replay_engine.snapshot().to_canonical_json(), engine.snapshot().to_canonical_json());
    }

    #[test]
    fn compound_request_animates_the_new_object() {
        let mut engine = Engine::default();
        let mut history = HistoryQueue::default();
        let plan = r#"{"subtasks":[
            {"task_type":"create","paraphrased_request":"create a blue sphere","categories":[]},
            {"task_type":"animate","paraphrased_request":"move the blue sphere up 1 m","categories":[{"kind":"virtual_objects","properties":["position"]}]}
        ]}"#;
        let mut pipeline = Pipeline::new(RecordingProvider::new([
            reply(plan, 10, 10),
            reply(r#"{"objects":[{"name":"sphere_blue_1","primitive":"sphere","color":"blue","position":[0,1,1]}]}"#, 10, 10),
            reply(r#"{"animations":[{"id":"up_1","unit":"Translate","subject":"sphere_blue_1","target":[0,2,1]}]}"#, 10, 10),
        ]));
        let outcome = pipeline.handle(&mut engine, &mut history, "create a blue sphere and move it up").unwrap();
        assert_eq!(outcome.executed.iter().map(|c| c.task_type).collect::<Vec<_>>(), [TaskType::Create, TaskType::Animate]);
        assert!(outcome.warnings.is_empty(), "{:?}", outcome.warnings);
        engine.run_ticks(50);
        let snap = engine.snapshot();
        assert_eq!(snap.object("sphere_blue_1").unwrap().world.position.y, 2.0);
    }

    #[test]
    fn malformed_payload_warns_without_mutation() {
        let mut engine = Engine::default();
        let mut history = HistoryQueue::default();
        let before = engine.snapshot().to_canonical_json();
        let mut pipeline = Pipeline::new(RecordingProvider::new([
            reply(RED_CUBE_PLAN, 1, 1),
            reply(r#"{"objects":[{"primitive":"cube"}]}"#, 1, 1),
        ]));
        let outcome = pipeline.handle(&mut engine, &mut history, "create a red cube").unwrap();
        assert!(outcome.executed.is_empty());
        assert_eq!(outcome.warnings.len(), 1);
        assert!(outcome.warnings[0].contains("/objects/0/name"));
        assert_eq!(engine.snapshot().to_canonical_json(), before);
    }

    #[test]
    fn provider_failure_leaves_scene_untouched() {
        let mut engine = Engine::default();
        let mut history = HistoryQueue::default();
        // plan names two subtasks but only the first refined reply exists
        let plan = r#"{"subtasks":[
            {"task_type":"create","paraphrased_request":"a","categories":[]},
            {"task_type":"create","paraphrased_request":"b","categories":[]}
        ]}"#;
        let mut pipeline = Pipeline::new(RecordingProvider::new([
            reply(plan, 1, 1),
            reply(r#"{"objects":[{"name":"a","primitive":"cube"}]}"#, 1, 1),
        ]));
        let err = pipeline.handle(&mut engine, &mut history, "make a and b").unwrap_err();
        assert!(matches!(err, LlmError::ProviderUnavailable(_)));
        assert!(engine.scene().is_empty());
        assert_eq!(history.len(), 1);
    }

    #[test]
    fn initial_response_parsing() {
        assert_eq!(parse_initial_response(RED_CUBE_PLAN).unwrap().subtasks.len(), 1);
        let wrapped = format!("Sure! {RED_CUBE_PLAN} Anything else?");
        assert_eq!(parse_initial_response(&wrapped).unwrap(), parse_initial_response(RED_CUBE_PLAN).unwrap());
        assert!(matches!(parse_initial_response("[]"), Err(LlmError::SchemaViolation { .. })));
        assert_eq!(parse_initial_response("no idea"), Err(LlmError::NoJsonFound));
        let bad_prop = r#"{"subtasks":[{"task_type":"create","paraphrased_request":"x","categories":[{"kind":"history","properties":["color"]}]}]}"#;
        match parse_initial_response(bad_prop) {
            Err(LlmError::SchemaViolation { path, .. }) => assert_eq!(path, "/subtasks/0/categories/0/properties"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn refined_response_parsing() {
        let anim = parse_refined_response(
            r#"{"animations":[{"id":"orbit_earth_1","unit":"Orbit","subject":"earth","target":"sun"}]}"#,
            TaskType::Animate,
        )
        .unwrap();
        assert_eq!(anim.task_type, TaskType::Animate);
        assert_eq!(anim.speech_text, None);
        let talk = parse_refined_response("I placed the desk for you.", TaskType::Converse).unwrap();
        assert_eq!(talk.speech_text.as_deref(), Some("I placed the desk for you."));
        assert_eq!(parse_refined_response("I placed the desk for you.", TaskType::Create), Err(LlmError::NoJsonFound));
    }
}
