mod invariants;

use invariants::*;
use proptest::prelude::*;
use sceneweave_core::context::{CategoryKind, HistoryQueue};
use sceneweave_core::engine::{Engine, TaskType};
use sceneweave_core::fusion::{Hand, HandPose};
use sceneweave_core::llm::{
    build_initial_prompt, Completion, LlmError, LlmProvider, Pipeline, PromptEnvelope, RecordingProvider, ScriptedReply,
};
use sceneweave_core::math::{Euler, Vec3};
use sceneweave_core::scene::{ObjectSpec, PrimitiveKind, Scene, SceneError, Transform};
use serde_json::json;

fn build(scene: &mut Scene, n: usize, seeds: &[([f64; 3], [f64; 3], f64)]) -> Vec<sceneweave_core::scene::ObjectId> {
    (0..n)
        .map(|i| {
            let (p, e, s) = seeds[i % seeds.len()];
            let t = Transform::at(v(p)).with_orientation(Euler::new(e[0], e[1], e[2])).with_scale(Vec3::repeat(s));
            scene.add_object(ObjectSpec::primitive(format!("o{i}"), PrimitiveKind::Cube).transform(t)).unwrap()
        })
        .collect()
}

fn seeds() -> impl Strategy<Value = Vec<([f64; 3], [f64; 3], f64)>> {
    let p = [-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64];
    let e = [-180.0..180.0f64, -80.0..80.0f64, -180.0..180.0f64];
    prop::collection::vec((p, e, 0.3..3.0f64), 1..8)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn reparenting_never_creates_a_cycle(
        n in 2usize..10,
        seeds in seeds(),
        ops in prop::collection::vec((0usize..10, prop::option::of(0usize..10)), 1..30),
    ) {
        let mut scene = Scene::new();
        let ids = build(&mut scene, n, &seeds);
        let mut parent: Vec<Option<usize>> = vec![None; n];
        for (c, p) in ops {
            let (c, p) = (c % n, p.map(|p| p % n));
            // oracle: a cycle forms when the child is the new parent or one of its ancestors
            let mut cursor = p;
            let mut cycles = false;
            while let Some(x) = cursor {
                if x == c {
                    cycles = true;
                    break;
                }
                cursor = parent[x];
            }
            let result = scene.set_parent(ids[c], p.map(|p| ids[p]), true);
            if cycles {
                prop_assert!(matches!(result, Err(SceneError::CycleDetected { .. })), "{result:?}");
            } else {
                prop_assert!(result.is_ok(), "{result:?}");
                parent[c] = p;
            }
            for (i, id) in ids.iter().enumerate() {
                prop_assert_eq!(scene.get(*id).unwrap().parent, parent[i].map(|p| ids[p]));
            }
        }
    }

    #[test]
    fn local_world_round_trip(n in 1usize..6, seeds in seeds(), chain in any::<bool>(), p in [-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64]) {
        let mut scene = Scene::new();
        let ids = build(&mut scene, n, &seeds);
        if chain {
            for w in ids.windows(2) {
                scene.set_parent(w[1], Some(w[0]), false).unwrap();
            }
        }
        for id in ids {
            let world = scene.local_to_world(id, &v(p)).unwrap();
            let back = scene.world_to_local(id, &world).unwrap();
            prop_assert!((back - v(p)).norm() <= 1e-6, "{back:?} vs {p:?}");
        }
    }

    #[test]
    fn nearest_matches_linear_scan(n in 1usize..12, seeds in seeds(), p in [-6.0..6.0f64, -6.0..6.0f64, -6.0..6.0f64]) {
        let mut scene = Scene::new();
        let ids = build(&mut scene, n, &seeds);
        let d = |id| (scene.world_position(id).unwrap() - v(p)).norm();
        let best = ids.iter().map(|&id| d(id)).fold(f64::INFINITY, f64::min);
        let found = scene.nearest(&v(p), None).unwrap();
        prop_assert!((d(found) - best).abs() <= 1e-12);
    }

    #[test]
    fn snapshots_are_deterministic(n in 1usize..6, seeds in seeds(), ticks in 0u64..50) {
        let run = || {
            let mut engine = Engine::default();
            build(engine.scene_mut(), n, &seeds);
            engine.animate(&json!({"animations": [{"id": "spin", "unit": "rotate", "subject": "o0", "axis": "y"}]})).unwrap();
            engine.run_ticks(ticks);
            engine.snapshot().to_canonical_json()
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn context_sections_match_the_request(request in category_request(), k in 0usize..30) {
        let mut engine = fuzz_engine();
        engine.update_hand_pose(HandPose::at_palm(Hand::Left, Vec3::new(0.0, 1.0, 0.3), 0.0)).unwrap();
        let mut history = HistoryQueue::default();
        for i in 0..k {
            history.record_message(format!("m{i}"));
        }
        let payload = engine.retrieve_context(&request, &history).unwrap();
        let expected: std::collections::BTreeSet<CategoryKind> = request.iter().map(|c| c.kind).collect();
        prop_assert_eq!(payload.kinds(), expected);
        prop_assert!(payload.estimated_tokens <= engine.full_context(&history).estimated_tokens);
    }

    #[test]
    fn history_keeps_the_last_ten(k in 0usize..60) {
        check_history_window(k)?;
    }

    #[test]
    fn proxies_stay_invisible_and_listed(count in 1usize..5, centers in prop::collection::vec([-4.0..4.0f64, 0.1..1.0f64, -4.0..4.0f64], 5)) {
        let proxies: Vec<_> = (0..count)
            .map(|i| json!({"id": format!("proxy_{i}"), "kind": "volume", "tags": [format!("thing_{i}")],
                "center": centers[i], "extents": [0.3, centers[i][1], 0.3], "yaw_deg": 0}))
            .collect();
        let mut engine = Engine::default();
        engine.load_room_scan(&json!({"schema_version": 1, "proxies": proxies}).to_string()).unwrap();
        let snapshot = engine.snapshot();
        let real: Vec<_> = snapshot.objects.iter().filter(|o| o.tags.contains("real_world")).collect();
        prop_assert_eq!(real.len(), count);
        prop_assert!(real.iter().all(|o| !o.visible));
        let request = [sceneweave_core::context::ContextCategory::everything(CategoryKind::RealWorld)];
        let section = engine.retrieve_context(&request, &HistoryQueue::default()).unwrap().render();
        for i in 0..count {
            let id = format!("proxy_{i}");
            prop_assert!(section.contains(&id), "{section}");
        }
    }

    #[test]
    fn hand_follow_tracks_the_palm(
        offset in [-0.3..0.3f64, -0.3..0.3f64, -0.3..0.3f64],
        poses in prop::collection::vec(([-2.0..2.0f64, 0.5..2.0f64, -2.0..2.0f64], [-180.0..180.0f64, -80.0..80.0f64, -180.0..180.0f64]), 1..8),
    ) {
        let mut engine = Engine::default();
        engine.scene_mut().add_object(ObjectSpec::primitive("token", PrimitiveKind::Sphere).at(Vec3::new(0.0, 1.0, 0.0))).unwrap();
        engine.fuse(&json!({"blocks": [{"object": "token", "block": "hand_follow", "hand": "right", "offset": offset}]})).unwrap();
        let id = engine.scene().id_of("token").unwrap();
        for (palm, e) in poses {
            let mut pose = HandPose::at_palm(Hand::Right, v(palm), 0.0);
            pose.palm_orientation = Euler::new(e[0], e[1], e[2]);
            engine.update_hand_pose(pose).unwrap();
            engine.tick();
            let r = rotate_oracle(e[0], e[1], e[2], offset);
            let want = Vec3::new(palm[0] + r[0], palm[1] + r[1], palm[2] + r[2]);
            let got = engine.scene().world_position(id).unwrap();
            prop_assert!((got - want).norm() <= 1e-6, "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn envelope_digest_is_deterministic(text in ".{0,60}", other in ".{0,60}", k in 0usize..12) {
        let mut history = HistoryQueue::default();
        for i in 0..k {
            history.record_message(format!("m{i}"));
        }
        let a = build_initial_prompt(&text, &history).digest();
        prop_assert_eq!(&a, &build_initial_prompt(&text, &history).digest());
        prop_assert_eq!(a.len(), 64);
        if text != other {
            prop_assert_ne!(a, build_initial_prompt(&other, &history).digest());
        }
    }

    #[test]
    fn usage_totals_count_every_call(k in 0usize..5, tokens in prop::collection::vec((1u64..5000, 1u64..500), 6)) {
        let plan: Vec<_> = (0..k)
            .map(|i| json!({"task_type": "converse", "paraphrased_request": format!("part {i}"), "categories": []}))
            .collect();
        let mut replies = vec![ScriptedReply { text: json!({"subtasks": plan}).to_string(), input_tokens: Some(tokens[0].0), output_tokens: Some(tokens[0].1) }];
        for (i, t) in tokens.iter().enumerate().skip(1).take(k) {
            replies.push(ScriptedReply { text: format!("answer {i}"), input_tokens: Some(t.0), output_tokens: Some(t.1) });
        }
        let mut pipeline = Pipeline::new(RecordingProvider::new(replies));
        let mut engine = Engine::default();
        let mut history = HistoryQueue::default();
        let outcome = pipeline.handle(&mut engine, &mut history, "talk to me").unwrap();
        let spent = &tokens[..=k];
        prop_assert_eq!(outcome.usage.calls, 1 + k as u64);
        prop_assert_eq!(outcome.usage.input_tokens, spent.iter().map(|t| t.0).sum::<u64>());
        prop_assert_eq!(outcome.usage.output_tokens, spent.iter().map(|t| t.1).sum::<u64>());
        prop_assert_eq!(pipeline.ledger().totals(&outcome.request_id), Some(&outcome.usage));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn translate_completes_on_time(c in translate_case()) {
        check_translate(&c)?;
    }

    #[test]
    fn orbit_keeps_its_radius(c in orbit_case()) {
        check_orbit(&c, 2_000)?;
    }

    #[test]
    fn scaling_passes_the_midpoint(c in scaling_case()) {
        check_scaling_midpoint(&c)?;
    }

    #[test]
    fn sequential_start_is_previous_completion((a, b) in sequential_case()) {
        check_sequential(a, b)?;
    }

    #[test]
    fn gaze_points_at_the_target((viewer, target, moves) in gaze_case()) {
        check_gaze(viewer, target, &moves)?;
    }

    #[test]
    fn attach_detach_round_trip(c in tree_case()) {
        check_attach_detach(&c)?;
    }

    #[test]
    fn support_snaps_physics_objects(c in support_case()) {
        check_support(&c)?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1_000))]

    #[test]
    fn rejected_replies_leave_the_scene_alone(input in fuzz_input()) {
        let engine = fuzz_engine();
        check_fuzz(&engine, &engine.snapshot().to_canonical_json(), &input)?;
    }
}

#[test]
fn translate_reference_case() {
    check_translate_reference().unwrap();
}

/// Records the history each initial prompt carried.
struct HistorySpy {
    seen: Vec<Vec<String>>,
}

impl LlmProvider for HistorySpy {
    fn complete(&mut self, envelope: &PromptEnvelope) -> Result<Completion, LlmError> {
        self.seen.push(envelope.history.clone());
        Ok(Completion { text: r#"{"subtasks":[]}"#.into(), input_tokens: 1, output_tokens: 1 })
    }
}

#[test]
fn prompts_carry_the_last_ten_requests() {
    let mut pipeline = Pipeline::new(HistorySpy { seen: Vec::new() });
    let mut engine = Engine::default();
    let mut history = HistoryQueue::default();
    for i in 0..25 {
        pipeline.handle(&mut engine, &mut history, &format!("request {i}")).unwrap();
    }
    let last = pipeline.provider().seen.last().unwrap();
    let expected: Vec<String> = (15..25).map(|i| format!("request {i}")).collect();
    assert_eq!(last, &expected);
}

#[test]
fn create_is_all_or_nothing() {
    let mut engine = fuzz_engine();
    let before = engine.snapshot().to_canonical_json();
    let bad = json!({"objects": [
        {"name": "fine", "primitive": "cube"},
        {"name": "broken", "primitive": "dodecahedron"},
    ]});
    assert!(engine.dispatch(TaskType::Create, &bad).is_err());
    assert_eq!(engine.snapshot().to_canonical_json(), before);
}
