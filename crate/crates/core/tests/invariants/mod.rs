//! Invariant checks shared by the property tests and the acceptance target.
//! Expected values come from small oracles written here, not from the
//! library's own math.
#![allow(dead_code)]

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use sceneweave_core::animation::{AnimationEvent, EventKind};
use sceneweave_core::context::{CategoryKind, ContextCategory, HistoryQueue};
use sceneweave_core::creator::{collect_supports, enforce_support, Support};
use sceneweave_core::engine::{Engine, TaskType};
use sceneweave_core::math::{Euler, Vec3};
use sceneweave_core::scene::{ObjectId, ObjectSpec, PrimitiveKind, Scene, Transform};
use serde_json::{json, Value};

pub const DT: f64 = 0.02;

fn fail(message: String) -> Result<(), TestCaseError> {
    Err(TestCaseError::fail(message))
}

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return fail(format!($($fmt)+));
        }
    };
}

pub fn v(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

/// `Ry(yaw) * Rx(pitch) * Rz(roll)` applied to `p`, spelled out by hand.
pub fn rotate_oracle(yaw: f64, pitch: f64, roll: f64, p: [f64; 3]) -> [f64; 3] {
    let (sy, cy) = yaw.to_radians().sin_cos();
    let (sp, cp) = pitch.to_radians().sin_cos();
    let (sr, cr) = roll.to_radians().sin_cos();
    let z = [cr * p[0] - sr * p[1], sr * p[0] + cr * p[1], p[2]];
    let x = [z[0], cp * z[1] - sp * z[2], sp * z[1] + cp * z[2]];
    [cy * x[0] + sy * x[2], x[1], -sy * x[0] + cy * x[2]]
}

fn dist(a: &Vec3, b: &Vec3) -> f64 {
    let d = [a.x - b.x, a.y - b.y, a.z - b.z];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

fn tick_of(events: &[AnimationEvent], id: &str, kind: EventKind) -> Option<u64> {
    events.iter().find(|e| e.id == id && e.kind == kind).map(|e| e.tick)
}

fn engine_with(names: &[(&str, [f64; 3])]) -> Engine {
    let mut engine = Engine::default();
    for (name, at) in names {
        engine.scene_mut().add_object(ObjectSpec::primitive(*name, PrimitiveKind::Cube).at(v(*at))).unwrap();
    }
    engine
}

fn coord() -> impl Strategy<Value = f64> {
    -5.0..5.0f64
}

fn point() -> impl Strategy<Value = [f64; 3]> {
    [coord(), coord(), coord()]
}

fn unit_dir() -> impl Strategy<Value = [f64; 3]> {
    [-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64].prop_filter("non-degenerate", |d| d.iter().map(|x| x * x).sum::<f64>() > 0.01).prop_map(|d| {
        let n = d.iter().map(|x| x * x).sum::<f64>().sqrt();
        [d[0] / n, d[1] / n, d[2] / n]
    })
}

// Translate ------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct TranslateCase {
    pub ticks: u64,
    pub speed: f64,
    /// How far short of a whole tick the motion ends.
    pub slack: f64,
    pub start: [f64; 3],
    pub direction: [f64; 3],
}

pub fn translate_case() -> impl Strategy<Value = TranslateCase> {
    (1u64..300, 0.1..5.0f64, 0.0..0.9f64, point(), unit_dir())
        .prop_map(|(ticks, speed, slack, start, direction)| TranslateCase { ticks, speed, slack, start, direction })
}

/// Completes on the tick the timed oracle predicts, lands exactly on the
/// target and never passes it.
pub fn check_translate(c: &TranslateCase) -> Result<(), TestCaseError> {
    let distance = (c.ticks as f64 - c.slack) * DT * c.speed;
    let target = [
        c.start[0] + c.direction[0] * distance,
        c.start[1] + c.direction[1] * distance,
        c.start[2] + c.direction[2] * distance,
    ];
    let mut engine = engine_with(&[("mover", c.start)]);
    engine
        .animate(&json!({"animations": [{"id": "t", "unit": "translate", "subject": "mover", "target": target, "speed": c.speed}]}))
        .map_err(|e| TestCaseError::fail(e.to_string()))?;
    let id = engine.scene().id_of("mover").unwrap();
    let goal = v(target);
    let mut remaining = dist(&v(c.start), &goal);
    let mut events = Vec::new();
    for _ in 0..c.ticks + 3 {
        events.extend(engine.tick());
        let p = engine.scene().world_position(id).unwrap();
        let along = (p - v(c.start)).dot(&v(c.direction));
        ensure!(along <= distance + 1e-9, "overshoot: {along} > {distance}");
        let now = dist(&p, &goal);
        ensure!(now <= remaining + 1e-9, "moved away from the target");
        remaining = now;
    }
    ensure!(tick_of(&events, "t", EventKind::Completed) == Some(c.ticks), "completed at {:?}, expected {}", tick_of(&events, "t", EventKind::Completed), c.ticks);
    let end = engine.scene().world_position(id).unwrap();
    ensure!(end == goal, "final {end:?} != target {goal:?}");
    Ok(())
}

/// The fixed case: 2 m at 1 m/s with dt 0.02 finishes at tick 100.
pub fn check_translate_reference() -> Result<(), TestCaseError> {
    let mut engine = engine_with(&[("mover", [0.0, 0.0, 0.0])]);
    engine
        .animate(&json!({"animations": [{"id": "t", "unit": "translate", "subject": "mover", "target": [2.0, 0.0, 0.0], "speed": 1.0}]}))
        .unwrap();
    let events = engine.run_ticks(120);
    ensure!(tick_of(&events, "t", EventKind::Completed) == Some(100), "completed at {:?}", tick_of(&events, "t", EventKind::Completed));
    let id = engine.scene().id_of("mover").unwrap();
    ensure!(engine.scene().world_position(id).unwrap() == Vec3::new(2.0, 0.0, 0.0), "final position off target");
    Ok(())
}

// Orbit ----------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct OrbitCase {
    pub center: [f64; 3],
    pub offset: [f64; 3],
    pub axis: [f64; 3],
    pub rate: f64,
}

pub fn orbit_case() -> impl Strategy<Value = OrbitCase> {
    (point(), point().prop_filter("off center", |o| o.iter().map(|x| x * x).sum::<f64>() > 0.01), unit_dir(), 1.0..720.0f64)
        .prop_map(|(center, offset, axis, rate)| OrbitCase { center, offset, axis, rate })
}

pub fn check_orbit(c: &OrbitCase, ticks: u64) -> Result<(), TestCaseError> {
    let start = [c.center[0] + c.offset[0], c.center[1] + c.offset[1], c.center[2] + c.offset[2]];
    let mut engine = engine_with(&[("sun", c.center), ("planet", start)]);
    engine
        .animate(&json!({"animations": [{"id": "o", "unit": "orbit", "subject": "planet", "center": "sun", "axis": c.axis, "speed": c.rate}]}))
        .map_err(|e| TestCaseError::fail(e.to_string()))?;
    let (sun, planet) = (engine.scene().id_of("sun").unwrap(), engine.scene().id_of("planet").unwrap());
    let radius = dist(&v(start), &v(c.center));
    for _ in 0..ticks {
        engine.tick();
        let r = dist(&engine.scene().world_position(planet).unwrap(), &engine.scene().world_position(sun).unwrap());
        ensure!((r - radius).abs() <= 1e-6, "radius drifted from {radius} to {r}");
    }
    Ok(())
}

// Scaling --------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct ScalingCase {
    pub half_ticks: u64,
    pub from: [f64; 3],
    pub to: [f64; 3],
}

pub fn scaling_case() -> impl Strategy<Value = ScalingCase> {
    let s = || [0.1..4.0f64, 0.1..4.0f64, 0.1..4.0f64];
    (1u64..150, s(), s()).prop_map(|(half_ticks, from, to)| ScalingCase { half_ticks, from, to })
}

pub fn check_scaling_midpoint(c: &ScalingCase) -> Result<(), TestCaseError> {
    let mut engine = Engine::default();
    engine
        .scene_mut()
        .add_object(ObjectSpec::primitive("blob", PrimitiveKind::Sphere).transform(Transform::at(Vec3::zeros()).with_scale(v(c.from))))
        .unwrap();
    let duration = 2.0 * c.half_ticks as f64 * DT;
    engine
        .animate(&json!({"animations": [{"id": "s", "unit": "scaling", "subject": "blob", "target": c.to, "duration": duration}]}))
        .map_err(|e| TestCaseError::fail(e.to_string()))?;
    engine.run_ticks(c.half_ticks);
    let id = engine.scene().id_of("blob").unwrap();
    let scale = engine.scene().get(id).unwrap().transform.scale;
    for axis in 0..3 {
        let mid = (c.from[axis] + c.to[axis]) / 2.0;
        ensure!((scale[axis] - mid).abs() <= 1e-6, "axis {axis}: {} vs midpoint {mid}", scale[axis]);
    }
    engine.run_ticks(c.half_ticks);
    let end = engine.scene().get(id).unwrap().transform.scale;
    ensure!(end == v(c.to), "final scale {end:?}");
    Ok(())
}

// Sequential groups ----------------------------------------------------------

pub fn sequential_case() -> impl Strategy<Value = (u64, u64)> {
    (1u64..120, 1u64..120)
}

/// The second spec of a group starts on the tick the first completes.
pub fn check_sequential(first_ticks: u64, second_ticks: u64) -> Result<(), TestCaseError> {
    let mut engine = engine_with(&[("box", [0.0, 0.0, 0.0])]);
    let a = first_ticks as f64 * DT;
    let b = second_ticks as f64 * DT;
    engine
        .animate(&json!({"animations": [
            {"id": "s1", "unit": "translate", "subject": "box", "target": [a, 0.0, 0.0], "speed": 1.0, "sequence_group": "g"},
            {"id": "s2", "unit": "translate", "subject": "box", "target": [a, 0.0, b], "speed": 1.0, "sequence_group": "g"},
        ]}))
        .map_err(|e| TestCaseError::fail(e.to_string()))?;
    let events = engine.run_ticks(first_ticks + second_ticks + 5);
    let done = tick_of(&events, "s1", EventKind::Completed);
    let started = tick_of(&events, "s2", EventKind::Started);
    ensure!(done.is_some() && done == started, "s1 completed {done:?}, s2 started {started:?}");
    Ok(())
}

// Gaze -----------------------------------------------------------------------

pub fn gaze_case() -> impl Strategy<Value = ([f64; 3], [f64; 3], Vec<[f64; 3]>)> {
    (point(), point(), prop::collection::vec(point(), 1..6))
        .prop_filter("apart", |(a, b, moves)| {
            let far = |p: &[f64; 3], q: &[f64; 3]| (0..3).map(|i| (p[i] - q[i]).powi(2)).sum::<f64>() > 0.04;
            far(a, b) && moves.iter().all(|m| far(a, m))
        })
}

/// After every tick the subject's forward axis points at the target.
pub fn check_gaze(viewer: [f64; 3], target: [f64; 3], moves: &[[f64; 3]]) -> Result<(), TestCaseError> {
    let mut engine = engine_with(&[("viewer", viewer), ("target", target)]);
    engine
        .animate(&json!({"animations": [{"id": "g", "unit": "gaze", "subject": "viewer", "target": "target"}]}))
        .map_err(|e| TestCaseError::fail(e.to_string()))?;
    let (vid, tid) = (engine.scene().id_of("viewer").unwrap(), engine.scene().id_of("target").unwrap());
    for m in std::iter::once(&target).chain(moves) {
        engine.scene_mut().set_world_position(tid, v(*m)).unwrap();
        engine.tick();
        let e = engine.scene().get(vid).unwrap().transform.orientation;
        let fwd = rotate_oracle(e.yaw, e.pitch, e.roll, [0.0, 0.0, 1.0]);
        let want = (v(*m) - v(viewer)).normalize();
        let angle = v(fwd).normalize().dot(&want).clamp(-1.0, 1.0).acos();
        ensure!(angle <= 1e-3, "gaze off by {angle} rad");
    }
    Ok(())
}

// Hierarchy ------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Node {
    pub parent: Option<usize>,
    pub position: [f64; 3],
    pub euler: [f64; 3],
    pub scale: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct TreeCase {
    pub nodes: Vec<Node>,
    pub child: usize,
    pub new_parent: usize,
}

fn node(index: usize) -> impl Strategy<Value = Node> {
    let parent = if index == 0 { Just(None).boxed() } else { prop::option::weighted(0.7, 0..index).boxed() };
    let angle = || -180.0..180.0f64;
    let s = || 0.3..3.0f64;
    (parent, point(), [angle(), -89.0..89.0f64, angle()], [s(), s(), s()])
        .prop_map(|(parent, position, euler, scale)| Node { parent, position, euler, scale })
}

pub fn tree_case() -> impl Strategy<Value = TreeCase> {
    (2usize..9)
        .prop_flat_map(|n| ((0..n).map(node).collect::<Vec<_>>(), 0..n, 0..n))
        .prop_map(|(nodes, child, new_parent)| TreeCase { nodes, child, new_parent })
}

fn build_tree(scene: &mut Scene, nodes: &[Node]) -> Vec<ObjectId> {
    let mut ids = Vec::new();
    for (i, n) in nodes.iter().enumerate() {
        let transform = Transform::at(v(n.position))
            .with_orientation(Euler::new(n.euler[0], n.euler[1], n.euler[2]))
            .with_scale(v(n.scale));
        let mut spec = ObjectSpec::primitive(format!("n{i}"), PrimitiveKind::Cube).transform(transform);
        if let Some(p) = n.parent {
            spec = spec.parent(ids[p]);
        }
        ids.push(scene.add_object(spec).unwrap());
    }
    ids
}

fn is_ancestor_or_self(nodes: &[Node], ancestor: usize, of: usize) -> bool {
    let mut cursor = Some(of);
    while let Some(c) = cursor {
        if c == ancestor {
            return true;
        }
        cursor = nodes[c].parent;
    }
    false
}

/// Attach keeps the world position; detach restores the old parent and
/// the same world position.
pub fn check_attach_detach(c: &TreeCase) -> Result<(), TestCaseError> {
    // the new parent may not sit under the child
    let new_parent = (0..c.nodes.len())
        .map(|k| (c.new_parent + k) % c.nodes.len())
        .find(|&p| !is_ancestor_or_self(&c.nodes, c.child, p));
    let Some(new_parent) = new_parent else { return Ok(()) };
    let mut engine = Engine::default();
    let ids = build_tree(engine.scene_mut(), &c.nodes);
    let child = ids[c.child];
    let before_parent = engine.scene().get(child).unwrap().parent;
    let before = engine.scene().world_position(child).unwrap();

    let name = |i: usize| format!("n{i}");
    engine
        .animate(&json!({"animations": [{"id": "a", "unit": "attach", "subject": name(c.child), "parent": name(new_parent)}]}))
        .map_err(|e| TestCaseError::fail(e.to_string()))?;
    engine.tick();
    ensure!(engine.scene().get(child).unwrap().parent == Some(ids[new_parent]), "attach did not reparent");
    let attached = engine.scene().world_position(child).unwrap();
    ensure!(dist(&attached, &before) <= 1e-6, "attach moved the child by {}", dist(&attached, &before));

    engine
        .animate(&json!({"animations": [{"id": "d", "unit": "detach", "subject": name(c.child)}]}))
        .map_err(|e| TestCaseError::fail(e.to_string()))?;
    engine.tick();
    ensure!(engine.scene().get(child).unwrap().parent == before_parent, "detach did not restore the parent");
    let after = engine.scene().world_position(child).unwrap();
    ensure!(dist(&after, &before) <= 1e-6, "round trip moved the child by {}", dist(&after, &before));
    Ok(())
}

// Support --------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SupportCase {
    pub table_center: [f64; 2],
    pub table_half: [f64; 2],
    pub table_top: f64,
    pub with_floor: bool,
    pub cups: Vec<([f64; 3], f64)>,
    pub placeholder: [f64; 3],
}

pub fn support_case() -> impl Strategy<Value = SupportCase> {
    let cup = ([-3.0..3.0f64, 0.0..2.5f64, -3.0..3.0f64], 0.05..0.4f64);
    (
        [-1.5..1.5f64, -1.5..1.5f64],
        [0.3..1.2f64, 0.3..1.2f64],
        0.3..1.2f64,
        any::<bool>(),
        prop::collection::vec(cup, 1..5),
        point(),
    )
        .prop_map(|(table_center, table_half, table_top, with_floor, cups, placeholder)| SupportCase {
            table_center,
            table_half,
            table_top,
            with_floor,
            cups,
            placeholder,
        })
}

fn room_scan(c: &SupportCase) -> String {
    let half_h = c.table_top / 2.0;
    let mut proxies = vec![json!({"id": "table_1", "kind": "volume", "tags": ["table"],
        "center": [c.table_center[0], half_h, c.table_center[1]],
        "extents": [c.table_half[0], half_h, c.table_half[1]], "yaw_deg": 0})];
    if c.with_floor {
        proxies.push(json!({"id": "floor_1", "kind": "plane", "tags": ["floor"], "center": [0, 0, 0], "extents": [20, 0, 20], "yaw_deg": 0}));
    }
    json!({"schema_version": 1, "proxies": proxies}).to_string()
}

/// Each cup ends with its bottom on a support top and its center over that
/// support's footprint; the placeholder never moves.
pub fn check_support(c: &SupportCase) -> Result<(), TestCaseError> {
    let mut engine = Engine::default();
    engine.load_room_scan(&room_scan(c)).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let table = (
        c.table_center[0] - c.table_half[0],
        c.table_center[0] + c.table_half[0],
        c.table_center[1] - c.table_half[1],
        c.table_center[1] + c.table_half[1],
        c.table_top,
    );
    let mut ids = Vec::new();
    for (i, (at, size)) in c.cups.iter().enumerate() {
        let spec = ObjectSpec::primitive(format!("cup_{i}"), PrimitiveKind::Cube)
            .transform(Transform::at(v(*at)).with_scale(Vec3::repeat(*size)))
            .physics(true);
        ids.push(engine.scene_mut().add_object(spec).unwrap());
    }
    let anchor = engine.scene_mut().add_object(ObjectSpec::new("anchor").at(v(c.placeholder)).physics(true)).unwrap();
    ids.push(anchor);
    let supports: Vec<Support> = collect_supports(engine.scene(), engine.fusion().proxies());
    enforce_support(&ids, engine.scene_mut(), &supports).map_err(|e| TestCaseError::fail(e.to_string()))?;

    ensure!(engine.scene().world_position(anchor).unwrap() == v(c.placeholder), "placeholder was adjusted");
    for (i, (at, size)) in c.cups.iter().enumerate() {
        let id = ids[i];
        let b = engine.scene().world_bounds(id).unwrap().unwrap();
        let (cx, cz) = (b.center.x, b.center.z);
        let bottom = b.center.y - b.half.y;
        let over_table = cx >= table.0 && cx <= table.1 && cz >= table.2 && cz <= table.3;
        // oracle: a unit cube scaled by size has half height size / 2
        let start_center_y = at[1];
        let table_reachable = table.4 <= start_center_y + 1e-3;
        let on_table = (bottom - table.4).abs() <= 1e-3 && over_table;
        let on_floor = c.with_floor && bottom.abs() <= 1e-3;
        ensure!((b.half.y - size / 2.0).abs() < 1e-9, "bounds oracle disagrees");
        if table_reachable {
            let started_over = at[0] >= table.0 && at[0] <= table.1 && at[2] >= table.2 && at[2] <= table.3;
            if started_over || !c.with_floor {
                ensure!(on_table, "cup {i} should rest on the table: bottom {bottom}, center ({cx}, {cz})");
            } else {
                ensure!(on_floor, "cup {i} should rest on the floor: bottom {bottom}");
            }
        } else if c.with_floor {
            ensure!(on_floor, "cup {i} below the table top should rest on the floor: bottom {bottom}");
        } else {
            // nothing reachable: grounded at y = 0
            ensure!(bottom.abs() <= 1e-3, "cup {i} should be grounded: bottom {bottom}");
        }
    }
    Ok(())
}

// Context --------------------------------------------------------------------

pub fn check_history_window(requests: usize) -> Result<(), TestCaseError> {
    let mut history = HistoryQueue::default();
    for i in 0..requests {
        history.record_message(format!("request {i}"));
    }
    let expected: Vec<String> = (requests.saturating_sub(10)..requests).map(|i| format!("request {i}")).collect();
    ensure!(history.messages() == expected, "history {:?}", history.messages());
    Ok(())
}

pub fn category_request() -> impl Strategy<Value = Vec<ContextCategory>> {
    prop::sample::subsequence(CategoryKind::ALL.to_vec(), 1..=CategoryKind::ALL.len()).prop_flat_map(|kinds| {
        kinds
            .into_iter()
            .map(|k| {
                let allowed = k.allowed_properties().to_vec();
                let n = allowed.len();
                prop::sample::subsequence(allowed, 0..=n).prop_map(move |props| ContextCategory::new(k, &props).unwrap())
            })
            .collect::<Vec<_>>()
    })
}

// Safety fuzz ----------------------------------------------------------------

pub const VALID_REPLIES: [(TaskType, &str); 5] = [
    (TaskType::Create, r#"{"objects":[{"name":"cube_red","primitive":"cube","position":[0,1,0],"color":"red","scale":0.3}]}"#),
    (TaskType::Create, r#"Sure. {"objects":[{"name":"ball","primitive":"sphere","position":[1,0.5,0],"physics":true,"tags":["toy"]}]}"#),
    (TaskType::Animate, r#"{"animations":[{"id":"m","unit":"translate","subject":"crate_1","target":[1,0,0],"speed":1}]}"#),
    (TaskType::Animate, r#"{"animations":[{"id":"r","unit":"rotate","subject":"crate_1","axis":"y","degrees":90,"duration":1}]}"#),
    (TaskType::Fuse, r#"{"placements":[{"object":"crate_1","anchor":"table"}]}"#),
];

#[derive(Debug, Clone)]
pub enum Mutation {
    Truncate(usize),
    Delete(usize),
    Insert(usize, char),
    Replace(usize, char),
}

fn mutate(text: &str, edits: &[Mutation]) -> String {
    let mut chars: Vec<char> = text.chars().collect();
    for m in edits {
        let len = chars.len().max(1);
        match *m {
            Mutation::Truncate(i) => chars.truncate(i % len),
            Mutation::Delete(i) if !chars.is_empty() => {
                chars.remove(i % len);
            }
            Mutation::Insert(i, c) => chars.insert(i % (chars.len() + 1), c),
            Mutation::Replace(i, c) if !chars.is_empty() => chars[i % len] = c,
            _ => {}
        }
    }
    chars.into_iter().collect()
}

fn mutation() -> impl Strategy<Value = Mutation> {
    let c = prop::sample::select(vec!['{', '}', '[', ']', '"', ',', ':', '-', '0', '9', 'e', '.', 'x', ' ', '\\', 'n', 'u']);
    prop_oneof![
        any::<usize>().prop_map(Mutation::Truncate),
        any::<usize>().prop_map(Mutation::Delete),
        (any::<usize>(), c.clone()).prop_map(|(i, c)| Mutation::Insert(i, c)),
        (any::<usize>(), c).prop_map(|(i, c)| Mutation::Replace(i, c)),
    ]
}

fn json_value() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::from),
        (-1e6..1e6f64).prop_map(Value::from),
        "[a-z_]{0,8}".prop_map(Value::from),
    ];
    leaf.prop_recursive(3, 24, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..4).prop_map(Value::from),
            prop::collection::btree_map(
                prop::sample::select(vec!["objects", "animations", "name", "unit", "id", "subject", "target", "position", "blocks", "placements", "x"]).prop_map(String::from),
                inner,
                0..4
            )
            .prop_map(|m| Value::Object(m.into_iter().collect())),
        ]
    })
}

#[derive(Debug, Clone)]
pub struct FuzzInput {
    pub task: TaskType,
    pub text: String,
}

pub fn fuzz_input() -> impl Strategy<Value = FuzzInput> {
    let task = prop::sample::select(vec![TaskType::Create, TaskType::Animate, TaskType::Fuse, TaskType::Converse]);
    prop_oneof![
        4 => (0..VALID_REPLIES.len(), prop::collection::vec(mutation(), 1..6)).prop_map(|(i, edits)| {
            let (task, text) = VALID_REPLIES[i];
            FuzzInput { task, text: mutate(text, &edits) }
        }),
        2 => (task.clone(), json_value()).prop_map(|(task, v)| FuzzInput { task, text: v.to_string() }),
        1 => (task, ".{0,80}").prop_map(|(task, text)| FuzzInput { task, text }),
    ]
}

/// Scene with one crate and a table, the staging target for fuzzed replies.
pub fn fuzz_engine() -> Engine {
    let mut engine = Engine::default();
    engine
        .load_room_scan(r#"{"schema_version":1,"proxies":[{"id":"table_1","kind":"volume","tags":["table"],"center":[0,0.35,1],"extents":[0.8,0.35,0.5],"yaw_deg":0}]}"#)
        .unwrap();
    engine.scene_mut().add_object(ObjectSpec::primitive("crate_1", PrimitiveKind::Cube).at(Vec3::new(0.0, 0.5, 0.0))).unwrap();
    engine
}

/// Outcome of one fuzzed reply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FuzzOutcome {
    Rejected,
    Applied,
}

/// Parses and dispatches `input` against a copy of `engine`. A rejection at
/// either stage must leave the copy untouched.
pub fn check_fuzz(engine: &Engine, before: &str, input: &FuzzInput) -> Result<FuzzOutcome, TestCaseError> {
    use sceneweave_core::llm::parse_refined_response;
    let mut staged = engine.clone();
    let result = parse_refined_response(&input.text, input.task)
        .map_err(|e| e.to_string())
        .and_then(|envelope| staged.dispatch(envelope.task_type, &envelope.payload).map_err(|e| e.to_string()));
    match result {
        Ok(_) => Ok(FuzzOutcome::Applied),
        Err(_) => {
            let after = staged.snapshot().to_canonical_json();
            if after != before {
                return Err(TestCaseError::fail(format!("rejected input mutated the scene: {:?}", input.text)));
            }
            Ok(FuzzOutcome::Rejected)
        }
    }
}
