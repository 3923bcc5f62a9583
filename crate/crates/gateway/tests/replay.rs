use sceneweave_gateway::bench;
use sceneweave_gateway::replay::{self, compare_golden, load_golden, load_transcript, run_script, ReplayError, TaskScript};
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

fn tasks() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/tasks")
}

fn paths(n: usize) -> (PathBuf, PathBuf) {
    (tasks().join(format!("task{n}.transcript.json")), tasks().join(format!("task{n}.script.json")))
}

#[test]
fn all_six_tasks_match_their_goldens() {
    let started = Instant::now();
    for n in 1..=6 {
        let (transcript, script) = paths(n);
        let run = replay::replay(&transcript, &script).unwrap_or_else(|e| panic!("task{n}: {e}"));
        assert!(!run.requests.is_empty(), "task{n} made no requests");
    }
    assert!(started.elapsed().as_secs_f64() < 10.0, "{:?}", started.elapsed());
}

#[test]
fn solar_system_midpoint_runs_orbit_and_spin_together() {
    let golden = load_golden(&tasks().join("task4.golden.json")).unwrap();
    let active = golden["checkpoints"]["mid"]["active_animations"].as_array().unwrap();
    let units: Vec<&str> = active.iter().filter(|a| a["subject"] == "earth").map(|a| a["unit"].as_str().unwrap()).collect();
    assert!(units.contains(&"Orbit") && units.contains(&"Rotate"), "{units:?}");
}

#[test]
fn tampered_golden_reports_the_first_divergence() {
    let (transcript, script) = paths(3);
    let script = TaskScript::load(&script).unwrap();
    let run = run_script(&script, load_transcript(&transcript).unwrap()).unwrap();
    let mut golden = load_golden(&script.golden).unwrap();
    assert!(compare_golden(&golden, &run.record).is_ok());
    let x = golden.pointer_mut("/final/tick").unwrap();
    *x = json!(x.as_u64().unwrap() + 1);
    match compare_golden(&golden, &run.record) {
        Err(ReplayError::GoldenMismatch { pointer, .. }) => assert_eq!(pointer, "/final/tick"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn missing_fixture_is_reported() {
    let (_, script) = paths(3);
    let err = replay::replay(Path::new("/nonexistent/transcript.json"), &script).unwrap_err();
    assert!(matches!(err, ReplayError::FixtureMissing { .. }), "{err:?}");
}

#[test]
fn transcript_miss_is_an_error() {
    // task1's transcript cannot answer task3's prompts
    let (transcript, _) = paths(1);
    let (_, script) = paths(3);
    let err = replay::replay(&transcript, &script).unwrap_err();
    assert!(matches!(err, ReplayError::Provider { .. }), "{err:?}");
}

/// Copies a task script into `dir` with absolute paths and a tampered golden.
fn tampered_copy(dir: &Path, n: usize) -> PathBuf {
    let (_, script) = paths(n);
    let mut raw: Value = serde_json::from_str(&std::fs::read_to_string(&script).unwrap()).unwrap();
    for key in ["prefabs", "room_scan", "responses"] {
        if let Some(p) = raw[key].as_str() {
            raw[key] = json!(tasks().join(p).to_string_lossy());
        }
    }
    let mut golden = load_golden(&tasks().join(raw["golden"].as_str().unwrap())).unwrap();
    golden["speech"] = json!(["something nobody said"]);
    let golden_path = dir.join("golden.json");
    std::fs::write(&golden_path, serde_json::to_string(&golden).unwrap()).unwrap();
    raw["golden"] = json!(golden_path.to_string_lossy());
    let out = dir.join("script.json");
    std::fs::write(&out, raw.to_string()).unwrap();
    out
}

#[test]
fn cli_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_sceneweave");
    let (transcript, script) = paths(3);
    let ok = Command::new(bin).args(["replay", "--transcript"]).arg(&transcript).arg("--script").arg(&script).output().unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    let stdout = String::from_utf8_lossy(&ok.stdout);
    assert!(stdout.starts_with("request_id,input_tokens,output_tokens,calls,elapsed_ms"), "{stdout}");

    let dir = tempfile::tempdir().unwrap();
    let bad = tampered_copy(dir.path(), 3);
    let drift = Command::new(bin).args(["replay", "--transcript"]).arg(&transcript).arg("--script").arg(&bad).output().unwrap();
    assert_eq!(drift.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&drift.stderr).contains("/speech"));

    let missing = Command::new(bin).args(["replay", "--transcript", "/nonexistent.json", "--script"]).arg(&script).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));

    let config = dir.path().join("bad.json");
    std::fs::write(&config, r#"{"provider":{"kind":"http","endpoint":"https://x","model":"m","api_key":"sk-1"}}"#).unwrap();
    let refused = Command::new(bin).args(["serve", "--config"]).arg(&config).output().unwrap();
    assert_eq!(refused.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&refused.stderr).contains("/provider/api_key"));
}

#[test]
fn bench_cli_prints_csv() {
    let out = Command::new(env!("CARGO_BIN_EXE_sceneweave")).args(["bench", "--scene-size", "30"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("scene_size,properties_per_object,category,property,full_tokens,selective_tokens,ratio,elapsed_ms")
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), bench::measure(30).len());
    assert!(rows.iter().all(|r| r.starts_with("30,12,") && r.split(',').count() == 8));
}
