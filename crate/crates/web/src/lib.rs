//! Browser bindings. Every call returns a JSON string; failures come back
//! as `{"error": "..."}` so the page never has to catch exceptions.

use sceneweave_core::context::{CategoryKind, ContextCategory, HistoryQueue, Property};
use sceneweave_core::creator::PrefabRegistry;
use sceneweave_core::engine::{Engine, TaskType};
use sceneweave_core::fusion::{Hand, HandPose};
use sceneweave_core::math::Vec3;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const ROOM: &str = r#"{"schema_version":1,"proxies":[
  {"id":"floor_1","kind":"plane","tags":["floor"],"center":[0,0,0],"extents":[4,0,4],"yaw_deg":0},
  {"id":"table_1","kind":"volume","tags":["table"],"center":[0,0.35,0],"extents":[0.8,0.35,0.5],"yaw_deg":0},
  {"id":"shelf_1","kind":"volume","tags":["shelf"],"center":[2,0.9,-2],"extents":[0.6,0.9,0.2],"yaw_deg":0}
]}"#;

const SOLAR: &str = r#"{"objects":[
  {"name":"sun","primitive":"sphere","position":[0,1.5,0],"scale":0.6,"color":"yellow"},
  {"name":"earth","primitive":"sphere","position":[1.6,1.5,0],"scale":0.25,"color":"blue"},
  {"name":"moon","primitive":"sphere","position":[2.0,1.5,0],"scale":0.1,"color":"white","parent":"earth"}
]}"#;

fn error(message: impl std::fmt::Display) -> String {
    json!({ "error": message.to_string() }).to_string()
}

/// A small room with a table, a solar system and a history of requests.
#[wasm_bindgen]
pub struct Playground {
    engine: Engine,
    history: HistoryQueue,
    drops: usize,
}

impl Default for Playground {
    fn default() -> Self {
        Self::new()
    }
}

#[wasm_bindgen]
impl Playground {
    #[wasm_bindgen(constructor)]
    pub fn new() -> Playground {
        let mut engine = Engine::new(PrefabRegistry::default());
        engine.load_room_scan(ROOM).expect("bundled room");
        let solar: Value = serde_json::from_str(SOLAR).expect("bundled scene");
        engine.dispatch(TaskType::Create, &solar).expect("bundled scene");
        engine.update_hand_pose(HandPose::at_palm(Hand::Right, Vec3::new(0.3, 1.2, 0.6), 0.0)).expect("hand pose");
        let mut history = HistoryQueue::default();
        for text in ["make a sun and an earth", "give the earth a moon", "put a table in the middle"] {
            history.record_message(text);
        }
        Playground { engine, history, drops: 0 }
    }

    /// Schedules an animation command, e.g. `{"animations": [...]}`.
    pub fn animate(&mut self, command: &str) -> String {
        let value: Value = match serde_json::from_str(command) {
            Ok(v) => v,
            Err(e) => return error(e),
        };
        match self.engine.animate(&value) {
            Ok(report) => json!({ "scheduled": report.scheduled }).to_string(),
            Err(e) => error(e),
        }
    }

    /// Stops an animation by id.
    pub fn stop(&mut self, id: &str) -> String {
        match self.engine.stop_animation(id) {
            Ok(()) => json!({ "stopped": id }).to_string(),
            Err(e) => error(e),
        }
    }

    /// Advances `ticks` fixed steps and returns the visible objects.
    pub fn step(&mut self, ticks: u32) -> String {
        let events = self.engine.run_ticks(u64::from(ticks));
        let mut out = self.view();
        out["events"] = json!(events.len());
        out.to_string()
    }

    /// Current visible objects plus the room proxies, for drawing.
    pub fn scene(&self) -> String {
        self.view().to_string()
    }

    /// Context for one category (and optionally one property) next to the
    /// size of the full dump.
    pub fn context(&self, category: &str, property: &str) -> String {
        let kind = match CategoryKind::parse(category) {
            Ok(k) => k,
            Err(e) => return error(e),
        };
        let props: Vec<Property> = match property {
            "" => Vec::new(),
            p => match Property::parse(p) {
                Some(p) => vec![p],
                None => return error(format!("unknown property {p:?}")),
            },
        };
        let request = match ContextCategory::new(kind, &props) {
            Ok(r) => [r],
            Err(e) => return error(e),
        };
        let selective = match self.engine.retrieve_context(&request, &self.history) {
            Ok(p) => p,
            Err(e) => return error(e),
        };
        let full = self.engine.full_context(&self.history);
        json!({
            "text": selective.render(),
            "selective_tokens": selective.estimated_tokens,
            "full_tokens": full.estimated_tokens,
            "ratio": selective.estimated_tokens as f64 / full.estimated_tokens.max(1) as f64,
            "properties": kind.allowed_properties().iter().map(|p| p.as_str()).collect::<Vec<_>>(),
        })
        .to_string()
    }

    /// Drops a physics cube of edge `size` at (x, y, z) and reports how the
    /// support rule moved it.
    pub fn drop_cube(&mut self, x: f64, y: f64, z: f64, size: f64) -> String {
        self.drops += 1;
        let command = json!({"objects": [{
            "name": format!("cube_{}", self.drops),
            "primitive": "cube",
            "position": [x, y, z],
            "scale": size,
            "physics": true,
            "color": "red",
        }]});
        match self.engine.create(&command) {
            Ok(report) => json!({ "created": report.created, "adjustments": report.adjustments }).to_string(),
            Err(e) => error(e),
        }
    }
}

impl Playground {
    fn view(&self) -> Value {
        let snapshot = self.engine.snapshot();
        let objects: Vec<Value> = snapshot
            .objects
            .iter()
            .filter(|o| !o.placeholder)
            .map(|o| {
                let bounds = self.engine.scene().world_bounds(o.id).ok().flatten();
                json!({
                    "name": o.name,
                    "position": o.world.position.as_slice(),
                    "size": bounds.map(|b| (b.half * 2.0).as_slice().to_vec()),
                    "color": o.color,
                    "visible": o.visible,
                    "real": o.tags.contains("real_world"),
                })
            })
            .collect();
        let active: Vec<&str> = snapshot.active_animations.iter().map(|a| a.id.as_str()).collect();
        json!({ "tick": snapshot.tick, "objects": objects, "active": active })
    }
}
