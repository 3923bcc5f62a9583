//! Context-size measurement on a synthetic scene.

use sceneweave_core::context::{CategoryKind, ContextCategory, HistoryQueue, Property};
use sceneweave_core::creator::PrefabRegistry;
use sceneweave_core::engine::{Engine, TaskType};
use sceneweave_core::fusion::{Hand, HandPose};
use sceneweave_core::math::Vec3;
use serde::Serialize;
use serde_json::json;
use std::time::Instant;

const COLORS: [&str; 6] = ["red", "green", "blue", "yellow", "white", "black"];
const PRIMITIVES: [&str; 4] = ["cube", "sphere", "cylinder", "capsule"];

pub const ROOM_SCAN: &str = r#"{"schema_version":1,"proxies":[
  {"id":"table_1","kind":"volume","tags":["table"],"center":[0,0.35,1],"extents":[0.8,0.35,0.5],"yaw_deg":0},
  {"id":"floor_1","kind":"plane","tags":["floor"],"center":[0,0,0],"extents":[5,0,5],"yaw_deg":0},
  {"id":"shelf_1","kind":"volume","tags":["shelf"],"center":[2,0.9,-2],"extents":[0.6,0.9,0.2],"yaw_deg":90}
]}"#;

pub const PREFABS: &str = r#"{"schema_version":1,"prefabs":[
  {"name":"desk","tags":["furniture"],"parts":[{"primitive":"cube","local_position":[0,0.72,0],"local_scale":[1.2,0.04,0.6]}]},
  {"name":"chair","tags":["furniture"],"parts":[{"primitive":"cube","local_position":[0,0.45,0],"local_scale":[0.45,0.05,0.45]}]},
  {"name":"lamp","tags":["light"],"parts":[{"primitive":"cylinder","local_scale":[0.1,0.4,0.1]}]},
  {"name":"stapler","tags":["supply"],"parts":[{"primitive":"cube","local_scale":[0.04,0.05,0.15]}]}
]}"#;

/// Synthetic engine with `n` objects. Every object carries a name, geometry,
/// position, orientation, scale, size, color, tags, parent link, id,
/// physics flag and visibility: twelve properties in all. Every fifth object
/// is parented to its predecessor.
pub fn synthetic_engine(n: usize) -> (Engine, HistoryQueue) {
    let mut engine = Engine::new(PrefabRegistry::from_json(PREFABS).expect("bundled prefabs"));
    engine.load_room_scan(ROOM_SCAN).expect("bundled room scan");
    let objects: Vec<_> = (0..n)
        .map(|i| {
            let f = i as f64;
            let mut o = json!({
                "name": format!("object_{i}"),
                "primitive": PRIMITIVES[i % PRIMITIVES.len()],
                "position": [(f * 0.37) % 8.0 - 4.0, 0.5 + (f * 0.11) % 2.0, (f * 0.53) % 8.0 - 4.0],
                "orientation": [(f * 17.0) % 360.0 - 180.0, 0.0, 0.0],
                "scale": [0.2 + (i % 3) as f64 * 0.1, 0.2, 0.2],
                "color": COLORS[i % COLORS.len()],
                "tags": [format!("group_{}", i % 7), "synthetic"],
            });
            if i % 5 == 4 {
                o["parent"] = json!(format!("object_{}", i - 1));
            }
            o
        })
        .collect();
    if n > 0 {
        engine.dispatch(TaskType::Create, &json!({ "objects": objects })).expect("synthetic scene");
    }
    engine.update_hand_pose(HandPose::at_palm(Hand::Right, Vec3::new(0.2, 1.1, 0.4), 0.0)).expect("hand pose");
    let mut history = HistoryQueue::default();
    for i in 0..10 {
        history.record_message(format!("synthetic request number {i}"));
    }
    (engine, history)
}

#[derive(Debug, Clone, Serialize)]
pub struct Measurement {
    pub scene_size: usize,
    pub properties_per_object: usize,
    pub category: &'static str,
    pub property: &'static str,
    pub full_tokens: usize,
    pub selective_tokens: usize,
    pub ratio: f64,
    pub elapsed_ms: f64,
}

pub const PROPERTIES_PER_OBJECT: usize = 12;

/// Tokens of every single-category, single-property request against the
/// full dump. Categories without properties are measured bare.
pub fn measure(n: usize) -> Vec<Measurement> {
    let (engine, history) = synthetic_engine(n);
    let full = engine.full_context(&history).estimated_tokens;
    let mut rows = Vec::new();
    for kind in CategoryKind::ALL {
        let props: Vec<Option<Property>> = if kind.allowed_properties().is_empty() {
            vec![None]
        } else {
            kind.allowed_properties().iter().copied().map(Some).collect()
        };
        for prop in props {
            let started = Instant::now();
            let request = [ContextCategory::new(kind, prop.as_slice()).expect("allowed property")];
            let selective = engine.retrieve_context(&request, &history).expect("valid request").estimated_tokens;
            rows.push(Measurement {
                scene_size: n,
                properties_per_object: PROPERTIES_PER_OBJECT,
                category: kind.as_str(),
                property: prop.map_or("", Property::as_str),
                full_tokens: full,
                selective_tokens: selective,
                ratio: if full == 0 { 0.0 } else { selective as f64 / full as f64 },
                elapsed_ms: started.elapsed().as_secs_f64() * 1000.0,
            });
        }
    }
    rows
}

pub fn to_csv(rows: &[Measurement]) -> String {
    let mut out = String::from("scene_size,properties_per_object,category,property,full_tokens,selective_tokens,ratio,elapsed_ms\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{:.4},{:.3}\n",
            r.scene_size, r.properties_per_object, r.category, r.property, r.full_tokens, r.selective_tokens, r.ratio, r.elapsed_ms
        ));
    }
    out
}
