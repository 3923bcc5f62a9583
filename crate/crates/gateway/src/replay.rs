//! Scripted request runs against recorded transcripts, compared to goldens.

use sceneweave_core::canonical;
use sceneweave_core::context::HistoryQueue;
use sceneweave_core::creator::PrefabRegistry;
use sceneweave_core::engine::Engine;
use sceneweave_core::fusion::{Hand, HandPose};
use sceneweave_core::llm::{LlmError, LlmProvider, Pipeline, RecordingProvider, ScriptedMock, ScriptedReply, TranscriptEntry, UsageTotals};
use sceneweave_core::math::Vec3;
use sceneweave_core::scene::Reference;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("fixture missing: {path}")]
    FixtureMissing { path: String },
    #[error("invalid fixture {path}: {message}")]
    InvalidFixture { path: String, message: String },
    #[error("golden mismatch at {pointer}: expected {expected}, found {actual}")]
    GoldenMismatch { pointer: String, expected: String, actual: String },
    #[error("request {request:?} failed: {source}")]
    Provider { request: String, source: LlmError },
    #[error("step {step} failed: {message}")]
    Step { step: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Step {
    Request(String),
    Ticks(u64),
    Checkpoint(String),
    HandPose { hand: Hand, palm: [f64; 3], timestamp: f64 },
    Pick { object: String, hand: Hand },
    Release { hand: Hand },
    Stop(String),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskScript {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub prefabs: Option<PathBuf>,
    #[serde(default)]
    pub room_scan: Option<PathBuf>,
    #[serde(default)]
    pub timestep: Option<f64>,
    pub golden: PathBuf,
    /// Canned provider replies, used only when recording.
    #[serde(default)]
    pub responses: Option<PathBuf>,
    pub steps: Vec<Step>,
}

fn read(path: &Path) -> Result<String, ReplayError> {
    std::fs::read_to_string(path).map_err(|_| ReplayError::FixtureMissing { path: path.display().to_string() })
}

fn invalid(path: &Path, message: impl ToString) -> ReplayError {
    ReplayError::InvalidFixture { path: path.display().to_string(), message: message.to_string() }
}

impl TaskScript {
    /// Loads a script and resolves its relative paths against its directory.
    pub fn load(path: &Path) -> Result<TaskScript, ReplayError> {
        let mut script: TaskScript = serde_json::from_str(&read(path)?).map_err(|e| invalid(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        script.prefabs.as_mut().map(resolve);
        script.room_scan.as_mut().map(resolve);
        script.responses.as_mut().map(resolve);
        resolve(&mut script.golden);
        Ok(script)
    }
}

pub fn load_transcript(path: &Path) -> Result<ScriptedMock, ReplayError> {
    ScriptedMock::from_json(&read(path)?).map_err(|e| invalid(path, e))
}

#[derive(Debug, Clone, Serialize)]
pub struct RequestReport {
    pub request_id: String,
    pub text: String,
    pub usage: UsageTotals,
    pub elapsed_ms: f64,
    pub executed: Vec<String>,
    pub warnings: Vec<String>,
}

/// Everything a run produced. `record` is what goldens pin.
#[derive(Debug, Clone)]
pub struct ReplayRun {
    pub record: Value,
    pub requests: Vec<RequestReport>,
}

pub fn build_engine(script: &TaskScript) -> Result<Engine, ReplayError> {
    let prefabs = match &script.prefabs {
        Some(p) => PrefabRegistry::from_json(&read(p)?).map_err(|e| invalid(p, e))?,
        None => PrefabRegistry::default(),
    };
    let mut engine = Engine::with_timestep(prefabs, script.timestep.unwrap_or(sceneweave_core::animation::DEFAULT_TIMESTEP));
    if let Some(p) = &script.room_scan {
        engine.load_room_scan(&read(p)?).map_err(|e| invalid(p, e))?;
    }
    Ok(engine)
}

fn canonical_value<T: Serialize>(value: &T) -> Value {
    serde_json::from_str(&canonical::to_string(value)).expect("canonical JSON parses")
}

/// Runs every step. Provider failures abort the run; rejected commands are
/// recorded as warnings.
pub fn run_script<P: LlmProvider>(script: &TaskScript, provider: P) -> Result<ReplayRun, ReplayError> {
    let mut engine = build_engine(script)?;
    let mut pipeline = Pipeline::new(provider);
    let mut history = HistoryQueue::default();
    let mut events = Vec::new();
    let mut checkpoints = Map::new();
    let mut warnings = Vec::new();
    let mut speech = Vec::new();
    let mut requests = Vec::new();
    for (i, step) in script.steps.iter().enumerate() {
        let fail = |e: &dyn std::fmt::Display| ReplayError::Step { step: i, message: e.to_string() };
        match step {
            Step::Request(text) => {
                let outcome = pipeline
                    .handle(&mut engine, &mut history, text)
                    .map_err(|source| ReplayError::Provider { request: text.clone(), source })?;
                for w in &outcome.warnings {
                    warnings.push(json!({"request_id": outcome.request_id, "message": w}));
                }
                for s in &outcome.speech {
                    speech.push(json!({"request_id": outcome.request_id, "text": s}));
                }
                requests.push(RequestReport {
                    request_id: outcome.request_id.clone(),
                    text: text.clone(),
                    usage: outcome.usage.clone(),
                    elapsed_ms: outcome.elapsed_ms,
                    executed: outcome.executed.iter().map(|c| c.task_type.to_string()).collect(),
                    warnings: outcome.warnings.clone(),
                });
            }
            Step::Ticks(n) => events.extend(engine.run_ticks(*n)),
            Step::Checkpoint(name) => {
                checkpoints.insert(name.clone(), canonical_value(&engine.snapshot()));
            }
            Step::HandPose { hand, palm, timestamp } => {
                engine
                    .update_hand_pose(HandPose::at_palm(*hand, Vec3::new(palm[0], palm[1], palm[2]), *timestamp))
                    .map_err(|e| fail(&e))?;
            }
            Step::Pick { object, hand } => {
                engine.pick(&Reference::Name(object.clone()), *hand).map_err(|e| fail(&e))?;
            }
            Step::Release { hand } => {
                engine.release(*hand).map_err(|e| fail(&e))?;
            }
            Step::Stop(id) => engine.stop_animation(id).map_err(|e| fail(&e))?,
        }
        for w in engine.take_warnings() {
            warnings.push(json!({"request_id": null, "message": w}));
        }
    }
    let usage: Vec<&UsageTotals> = pipeline.ledger().entries().collect();
    let record = json!({
        "checkpoints": checkpoints,
        "events": canonical_value(&events),
        "final": canonical_value(&engine.snapshot()),
        "speech": speech,
        "usage": canonical_value(&usage),
        "warnings": warnings,
    });
    Ok(ReplayRun { record, requests })
}

/// First JSON pointer at which two documents differ.
pub fn first_divergence(expected: &Value, actual: &Value) -> Option<String> {
    fn walk(e: &Value, a: &Value, path: &mut String) -> bool {
        match (e, a) {
            (Value::Object(em), Value::Object(am)) => {
                let mut keys: Vec<&String> = em.keys().chain(am.keys()).collect();
                keys.sort();
                keys.dedup();
                for k in keys {
                    let len = path.len();
                    path.push('/');
                    path.push_str(&k.replace('~', "~0").replace('/', "~1"));
                    match (em.get(k), am.get(k)) {
                        (Some(x), Some(y)) => {
                            if walk(x, y, path) {
                                return true;
                            }
                        }
                        _ => return true,
                    }
                    path.truncate(len);
                }
                false
            }
            (Value::Array(ea), Value::Array(aa)) => {
                for i in 0..ea.len().max(aa.len()) {
                    let len = path.len();
                    path.push_str(&format!("/{i}"));
                    match (ea.get(i), aa.get(i)) {
                        (Some(x), Some(y)) => {
                            if walk(x, y, path) {
                                return true;
                            }
                        }
                        _ => return true,
                    }
                    path.truncate(len);
                }
                false
            }
            _ => canonical::value_to_string(e) != canonical::value_to_string(a),
        }
    }
    let mut path = String::new();
    walk(expected, actual, &mut path).then_some(path)
}

fn truncate(text: String) -> String {
    if text.len() > 200 {
        let cut = (0..=200).rev().find(|i| text.is_char_boundary(*i)).unwrap_or(0);
        format!("{}...", &text[..cut])
    } else {
        text
    }
}

/// Byte comparison of the canonical forms; the error names the first
/// diverging pointer.
pub fn compare_golden(expected: &Value, actual: &Value) -> Result<(), ReplayError> {
    if canonical::value_to_string(expected) == canonical::value_to_string(actual) {
        return Ok(());
    }
    let pointer = first_divergence(expected, actual).unwrap_or_default();
    let show = |v: &Value| truncate(v.pointer(&pointer).map(canonical::value_to_string).unwrap_or_else(|| "(absent)".into()));
    Err(ReplayError::GoldenMismatch { pointer: pointer.clone(), expected: show(expected), actual: show(actual) })
}

pub fn load_golden(path: &Path) -> Result<Value, ReplayError> {
    serde_json::from_str(&read(path)?).map_err(|e| invalid(path, e))
}

/// Replays `script` through the transcript at `transcript` and checks the
/// script's golden.
pub fn replay(transcript: &Path, script: &Path) -> Result<ReplayRun, ReplayError> {
    let script = TaskScript::load(script)?;
    let mock = load_transcript(transcript)?;
    let golden = load_golden(&script.golden)?;
    let run = run_script(&script, mock)?;
    compare_golden(&golden, &run.record)?;
    Ok(run)
}

/// Runs `script` against its canned responses, returning the transcript
/// and the run. Used to produce fixtures for later review.
pub fn record(script: &Path) -> Result<(TaskScript, Vec<TranscriptEntry>, ReplayRun), ReplayError> {
    let script = TaskScript::load(script)?;
    let responses_path = script
        .responses
        .clone()
        .ok_or_else(|| invalid(Path::new(&script.name), "script names no responses file"))?;
    let replies: Vec<ScriptedReply> = serde_json::from_str(&read(&responses_path)?).map_err(|e| invalid(&responses_path, e))?;
    let mut recorder = RecordingProvider::new(replies);
    let run = run_script(&script, &mut recorder)?;
    if recorder.remaining() > 0 {
        return Err(invalid(&responses_path, format!("{} responses were never used", recorder.remaining())));
    }
    Ok((script, recorder.into_transcript(), run))
}

pub fn write_pretty(path: &Path, value: &impl Serialize) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    text.push('\n');
    std::fs::write(path, text)
}
