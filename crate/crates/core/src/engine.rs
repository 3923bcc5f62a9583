//! The single-writer engine: one scene, the interpreters that mutate it, and
//! the per-tick order animations → hand constraints → support → snapshot.

use crate::animation::{parse_animation_request, AnimationError, AnimationEvent, AnimationLibrary, DEFAULT_TIMESTEP};
use crate::context::{ContextCategory, ContextError, ContextLibrary, ContextPayload, ContextSources, HistoryQueue};
use crate::creator::{apply, collect_supports, enforce_support, interpret_creation, Adjustment, CreatorError, PrefabRegistry};
use crate::fusion::{BuildingBlock, FusionError, Hand, HandPose, HeadPose, RealityFusion, RoomProxy};
use crate::math::Vec3;
use crate::scene::{ObjectId, Reference, Scene, SceneError, SceneSnapshot};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error(transparent)]
    Creator(#[from] CreatorError),
    #[error(transparent)]
    Animation(#[from] AnimationError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error("malformed command: {0}")]
    InvalidCommand(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskType {
    Create,
    Animate,
    Fuse,
    Converse,
}

impl TaskType {
    pub const ALL: [TaskType; 4] = [TaskType::Create, TaskType::Animate, TaskType::Fuse, TaskType::Converse];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskType::Create => "create",
            TaskType::Animate => "animate",
            TaskType::Fuse => "fuse",
            TaskType::Converse => "converse",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        TaskType::ALL.into_iter().find(|t| t.as_str() == name)
    }
}

impl fmt::Display for TaskType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What one dispatched command changed.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DispatchReport {
    pub created: Vec<String>,
    pub adjustments: Vec<Adjustment>,
    pub scheduled: Vec<String>,
    pub fused: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FuseCommand {
    #[serde(default)]
    blocks: Vec<BlockEntry>,
    #[serde(default)]
    placements: Vec<Placement>,
}

#[derive(Debug, Deserialize)]
struct BlockEntry {
    object: Reference,
    #[serde(flatten)]
    block: Value,
}

/// Put an object on top of the real-world proxy carrying `anchor`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Placement {
    object: Reference,
    anchor: String,
}

#[derive(Debug, Clone)]
pub struct Engine {
    scene: Scene,
    context: ContextLibrary,
    animations: AnimationLibrary,
    fusion: RealityFusion,
    prefabs: PrefabRegistry,
    settle: BTreeSet<ObjectId>,
    warnings: Vec<String>,
}

impl Default for Engine {
    fn default() -> Self {
        Engine::new(PrefabRegistry::default())
    }
}

impl Engine {
    pub fn new(prefabs: PrefabRegistry) -> Self {
        Engine::with_timestep(prefabs, DEFAULT_TIMESTEP)
    }

    pub fn with_timestep(prefabs: PrefabRegistry, timestep: f64) -> Self {
        Engine {
            scene: Scene::new(),
            context: ContextLibrary::new(),
            animations: AnimationLibrary::new(timestep),
            fusion: RealityFusion::new(),
            prefabs,
            settle: BTreeSet::new(),
            warnings: Vec::new(),
        }
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    /// Direct scene access for tests and tools; bypasses the interpreters.
    pub fn scene_mut(&mut self) -> &mut Scene {
        &mut self.scene
    }

    pub fn context(&self) -> &ContextLibrary {
        &self.context
    }

    pub fn animations(&self) -> &AnimationLibrary {
        &self.animations
    }

    pub fn fusion(&self) -> &RealityFusion {
        &self.fusion
    }

    pub fn prefabs(&self) -> &PrefabRegistry {
        &self.prefabs
    }

    pub fn tick_count(&self) -> u64 {
        self.animations.current_tick()
    }

    pub fn timestep(&self) -> f64 {
        self.animations.timestep()
    }

    pub fn take_warnings(&mut self) -> Vec<String> {
        let mut out = std::mem::take(&mut self.warnings);
        out.extend(self.animations.take_warnings());
        out
    }

    fn warn(&mut self, message: String) {
        log::warn!("{message}");
        self.warnings.push(message);
    }

    pub fn load_room_scan(&mut self, document: &str) -> Result<Vec<RoomProxy>, EngineError> {
        Ok(self.fusion.load_room_scan(document, &mut self.scene)?)
    }

    pub fn set_head_pose(&mut self, head: HeadPose) {
        self.fusion.set_head_pose(head);
    }

    pub fn snapshot(&self) -> SceneSnapshot {
        self.scene.snapshot(self.tick_count(), self.animations.active())
    }

    pub fn retrieve_context(&self, request: &[ContextCategory], history: &HistoryQueue) -> Result<ContextPayload, EngineError> {
        let snapshot = self.snapshot();
        Ok(self.context.retrieve(request, &self.sources(&snapshot, history))?)
    }

    pub fn full_context(&self, history: &HistoryQueue) -> ContextPayload {
        let snapshot = self.snapshot();
        self.context.full_dump(&self.sources(&snapshot, history))
    }

    fn sources<'a>(&'a self, snapshot: &'a SceneSnapshot, history: &'a HistoryQueue) -> ContextSources<'a> {
        ContextSources {
            snapshot,
            proxies: self.fusion.proxies(),
            user: self.fusion.user(),
            prefabs: &self.prefabs,
            history,
        }
    }

    /// Runs one validated command. Either the whole command takes effect or
    /// the engine is left as it was.
    pub fn dispatch(&mut self, task: TaskType, payload: &Value) -> Result<DispatchReport, EngineError> {
        match task {
            TaskType::Create => self.create(payload),
            TaskType::Animate => self.animate(payload),
            TaskType::Fuse => self.fuse(payload),
            TaskType::Converse => Ok(DispatchReport::default()),
        }
    }

    pub fn create(&mut self, payload: &Value) -> Result<DispatchReport, EngineError> {
        let specs = interpret_creation(payload, &self.prefabs, self.fusion.user().spawn_point())?;
        let checkpoint = self.scene.clone();
        let ids = apply(&specs, &mut self.scene, &self.prefabs)?;
        let supports = collect_supports(&self.scene, self.fusion.proxies());
        let adjustments = match enforce_support(&ids, &mut self.scene, &supports) {
            Ok(a) => a,
            Err(e) => {
                self.scene = checkpoint;
                return Err(e.into());
            }
        };
        let created = ids.iter().filter_map(|id| self.scene.get(*id).ok().map(|o| o.name.clone())).collect();
        Ok(DispatchReport { created, adjustments, ..Default::default() })
    }

    pub fn animate(&mut self, payload: &Value) -> Result<DispatchReport, EngineError> {
        let specs = parse_animation_request(payload)?;
        let scheduled = self.animations.schedule(specs, &mut self.context.animations)?;
        Ok(DispatchReport { scheduled, ..Default::default() })
    }

    pub fn fuse(&mut self, payload: &Value) -> Result<DispatchReport, EngineError> {
        let command: FuseCommand =
            serde_json::from_value(payload.clone()).map_err(|e| EngineError::InvalidCommand(e.to_string()))?;
        if command.blocks.is_empty() && command.placements.is_empty() {
            return Err(EngineError::InvalidCommand("fuse command has nothing to do".into()));
        }
        let scene_before = self.scene.clone();
        let fusion_before = self.fusion.clone();
        match self.fuse_all(&command) {
            Ok(report) => Ok(report),
            Err(e) => {
                self.scene = scene_before;
                self.fusion = fusion_before;
                Err(e)
            }
        }
    }

    fn fuse_all(&mut self, command: &FuseCommand) -> Result<DispatchReport, EngineError> {
        let mut report = DispatchReport::default();
        for entry in &command.blocks {
            let id = self.scene.resolve_reference(&entry.object)?;
            let block = BuildingBlock::parse(&entry.block)?;
            self.fusion.attach_building_block(&mut self.scene, id, &block)?;
            report.fused.push(self.scene.get(id)?.name.clone());
        }
        for placement in &command.placements {
            let id = self.scene.resolve_reference(&placement.object)?;
            let proxy = self.fusion.resolve_real_anchor(&placement.anchor)?.clone();
            let half_height = self.scene.world_bounds(id)?.map_or(0.0, |b| b.half.y);
            let target = proxy.center + Vec3::new(0.0, proxy.extents.y + half_height, 0.0);
            self.scene.set_world_position(id, target)?;
            let supports = collect_supports(&self.scene, self.fusion.proxies());
            report.adjustments.extend(enforce_support(&[id], &mut self.scene, &supports)?);
            report.fused.push(self.scene.get(id)?.name.clone());
        }
        Ok(report)
    }

    pub fn stop_animation(&mut self, id: &str) -> Result<(), EngineError> {
        self.animations.stop(id, &mut self.context.animations)?;
        Ok(())
    }

    /// Removes an object, everything animating it, and any constraint on it.
    pub fn destroy(&mut self, object: ObjectId) -> Result<(), EngineError> {
        self.scene.destroy_object(object)?;
        self.forget(object);
        Ok(())
    }

    fn forget(&mut self, object: ObjectId) {
        for id in self.animations.forget_object(object, &mut self.context.animations) {
            self.warn(format!("animation {id:?} removed with its object"));
        }
        self.fusion.forget_object(object);
        self.settle.remove(&object);
    }

    pub fn update_hand_pose(&mut self, pose: HandPose) -> Result<(), EngineError> {
        Ok(self.fusion.update_hand_pose(pose)?)
    }

    pub fn pick(&mut self, object: &Reference, hand: Hand) -> Result<ObjectId, EngineError> {
        let id = self.scene.resolve_reference(object)?;
        self.fusion.pick(&mut self.scene, id, hand)?;
        Ok(id)
    }

    /// Lets go of the held object. Physics objects settle on the next tick.
    pub fn release(&mut self, hand: Hand) -> Result<ObjectId, EngineError> {
        let id = self.fusion.release(&mut self.scene, hand)?;
        self.settle.insert(id);
        Ok(id)
    }

    pub fn tick(&mut self) -> Vec<AnimationEvent> {
        let events = self.animations.tick(&mut self.scene, &mut self.context.animations);
        for object in self.animations.take_destroyed() {
            self.forget(object);
        }
        if let Err(e) = self.fusion.apply_constraints(&mut self.scene) {
            self.warn(format!("hand constraint failed: {e}"));
        }
        if !self.settle.is_empty() {
            let pending: Vec<ObjectId> = std::mem::take(&mut self.settle).into_iter().filter(|id| self.scene.contains(*id)).collect();
            let supports = collect_supports(&self.scene, self.fusion.proxies());
            if let Err(e) = enforce_support(&pending, &mut self.scene, &supports) {
                self.warn(format!("support check failed: {e}"));
            }
        }
        events
    }

    pub fn run_ticks(&mut self, count: u64) -> Vec<AnimationEvent> {
        let mut events = Vec::new();
        for _ in 0..count {
            events.extend(self.tick());
        }
        events
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use serde_json::json;

    const TABLE_SCAN: &str = r#"{"schema_version":1,"proxies":[
        {"id":"table_1","kind":"volume","tags":["table"],"center":[0,0.35,1],"extents":[0.8,0.35,0.5],"yaw_deg":0}
    ]}"#;

    #[test]
    fn create_then_animate_by_name() {
        let mut engine = Engine::default();
        engine.create(&json!({"objects":[{"name":"cube_1","primitive":"cube","color":"red","position":[0,0,0]}]})).unwrap();
        engine.animate(&json!({"animations":[{"id":"m1","unit":"Translate","subject":"cube_1","target":[0,0,2]}]})).unwrap();
        engine.run_ticks(100);
        let snap = engine.snapshot();
        assert_eq!(snap.tick, 100);
        assert_eq!(snap.object("cube_1").unwrap().world.position, Vec3::new(0.0, 0.0, 2.0));
    }

    #[test]
    fn destroy_cascades_to_animations() {
        let mut engine = Engine::default();
        engine.create(&json!({"objects":[{"name":"cube_1","primitive":"cube","position":[0,0,0]}]})).unwrap();
        engine.animate(&json!({"animations":[{"id":"m1","unit":"Translate","subject":"cube_1","target":[0,0,2]}]})).unwrap();
        engine.run_ticks(10);
        assert_eq!(engine.snapshot().active_animations.len(), 1);
        let id = engine.scene().id_of("cube_1").unwrap();
        engine.destroy(id).unwrap();
        assert!(engine.snapshot().active_animations.is_empty());
        assert!(engine.snapshot().object("cube_1").is_none());
    }

    #[test]
    fn failed_fuse_leaves_engine_unchanged() {
        let mut engine = Engine::default();
        engine.create(&json!({"objects":[{"name":"cube_1","primitive":"cube"}]})).unwrap();
        let before = engine.snapshot().to_canonical_json();
        let err = engine.fuse(&json!({"blocks":[
            {"object":"cube_1","block":"grabbable"},
            {"object":"cube_1","block":"teleport"}
        ]}));
        assert!(matches!(err, Err(EngineError::Fusion(FusionError::UnknownBlock(_)))));
        assert_eq!(engine.snapshot().to_canonical_json(), before);
    }

    #[test]
    fn placement_on_table_proxy() {
        let mut engine = Engine::default();
        engine.load_room_scan(TABLE_SCAN).unwrap();
        engine
            .create(&json!({"objects":[{"name":"cup","primitive":"cylinder","scale":[0.08,0.05,0.08],"physics":true}]}))
            .unwrap();
        engine.fuse(&json!({"placements":[{"object":"cup","anchor":"table"}]})).unwrap();
        let cup = engine.scene().id_of("cup").unwrap();
        let bounds = engine.scene().world_bounds(cup).unwrap().unwrap();
        assert_relative_eq!(bounds.bottom(), 0.7, epsilon = 1e-9);
    }

    #[test]
    fn hand_follow_tracks_palm_after_tick() {
        let mut engine = Engine::default();
        engine.create(&json!({"objects":[{"name":"cube_1","primitive":"cube","scale":0.1}]})).unwrap();
        engine
            .fuse(&json!({"blocks":[{"object":"cube_1","block":"hand_follow","hand":"right","offset":[0,0.1,0]}]}))
            .unwrap();
        let id = engine.scene().id_of("cube_1").unwrap();
        assert_relative_eq!(engine.scene().world_position(id).unwrap(), Vec3::new(0.0, 1.3, 1.5), epsilon = 1e-12);
        engine.update_hand_pose(HandPose::at_palm(Hand::Right, Vec3::new(0.2, 1.0, 0.4), 1.0)).unwrap();
        engine.tick();
        assert_relative_eq!(engine.scene().world_position(id).unwrap(), Vec3::new(0.2, 1.1, 0.4), epsilon = 1e-6);
        engine.update_hand_pose(HandPose::at_palm(Hand::Right, Vec3::new(0.3, 1.0, 0.4), 2.0)).unwrap();
        engine.tick();
        assert_relative_eq!(engine.scene().world_position(id).unwrap(), Vec3::new(0.3, 1.1, 0.4), epsilon = 1e-6);
    }

    #[test]
    fn pick_move_release_keeps_drop_point() {
        let mut engine = Engine::default();
        engine.create(&json!({"objects":[{"name":"ball","primitive":"sphere","scale":0.2,"position":[0,1,1]}]})).unwrap();
        engine.fuse(&json!({"blocks":[{"object":"ball","block":"grabbable"}]})).unwrap();
        engine.update_hand_pose(HandPose::at_palm(Hand::Right, Vec3::new(0.0, 1.0, 1.0), 0.0)).unwrap();
        engine.pick(&Reference::name("ball"), Hand::Right).unwrap();
        engine.update_hand_pose(HandPose::at_palm(Hand::Right, Vec3::new(0.5, 1.2, 0.8), 1.0)).unwrap();
        engine.tick();
        let id = engine.release(Hand::Right).unwrap();
        engine.tick();
        assert_relative_eq!(engine.scene().world_position(id).unwrap(), Vec3::new(0.5, 1.2, 0.8), epsilon = 1e-6);
        assert_eq!(engine.scene().get(id).unwrap().parent, None);
    }

    #[test]
    fn identical_inputs_give_identical_snapshots() {
        let run = || {
            let mut engine = Engine::default();
            engine.create(&json!({"objects":[{"name":"sun","primitive":"sphere","position":[0,1,2]},{"name":"earth","primitive":"sphere","scale":0.3,"position":[1,1,2]}]})).unwrap();
            engine
                .animate(&json!({"animations":[
                    {"id":"o","unit":"Orbit","subject":"earth","target":"sun","sequence_group":"a"},
                    {"id":"r","unit":"Rotate","subject":"earth","axis":"y","sequence_group":"b"}
                ]}))
                .unwrap();
            let events = engine.run_ticks(77);
            (engine.snapshot().to_canonical_json(), crate::canonical::to_string(&events))
        };
        assert_eq!(run(), run());
    }
}
