//! Real-world proxies, hand tracking and interaction building blocks.

use crate::math::{Euler, Vec3};
use crate::scene::{Geometry, ObjectId, ObjectSpec, PrimitiveKind, Scene, SceneError, Transform};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

pub const ROOM_SCAN_SCHEMA_VERSION: u64 = 1;

/// Finger bones, three per finger, plus the wrist.
pub const BONE_NAMES: [&str; 16] = [
    "wrist", "thumb_1", "thumb_2", "thumb_3", "index_1", "index_2", "index_3", "middle_1", "middle_2",
    "middle_3", "ring_1", "ring_2", "ring_3", "pinky_1", "pinky_2", "pinky_3",
];

/// Spawn distance in front of the head, and drop below head height.
const SPAWN_DISTANCE: f64 = 1.5;
const SPAWN_DROP: f64 = 0.3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("room scan invalid at {path}: {message}")]
    SchemaViolation { path: String, message: String },
    #[error("no room proxy tagged {0:?}")]
    NotFound(String),
    #[error("stale {hand} hand pose: {timestamp} is older than {latest}")]
    StaleTimestamp { hand: Hand, timestamp: f64, latest: f64 },
    #[error("invalid hand pose: {0}")]
    InvalidPose(String),
    #[error("unknown building block {0:?}")]
    UnknownBlock(String),
    #[error("object {0:?} is not grabbable")]
    NotGrabbable(String),
    #[error("the {0} hand is not holding anything")]
    NothingHeld(Hand),
    #[error("malformed fusion command: {0}")]
    InvalidCommand(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
}

fn violation(path: impl Into<String>, message: impl Into<String>) -> FusionError {
    FusionError::SchemaViolation { path: path.into(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProxyKind {
    Plane,
    Volume,
}

impl ProxyKind {
    pub fn generic_name(self) -> &'static str {
        match self {
            ProxyKind::Plane => "invisible plane",
            ProxyKind::Volume => "invisible volume",
        }
    }
}

/// Invisible stand-in for a scanned real-world object.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoomProxy {
    pub id: String,
    pub generic_name: String,
    pub tags: BTreeSet<String>,
    pub center: Vec3,
    /// Half sizes.
    pub extents: Vec3,
    pub yaw_deg: f64,
    pub kind: ProxyKind,
    /// Scene node carrying the proxy, once inserted.
    pub object: Option<ObjectId>,
}

impl RoomProxy {
    pub fn top(&self) -> f64 {
        self.center.y + self.extents.y
    }
}

fn vec3_at(value: &Value, path: &str) -> Result<Vec3, FusionError> {
    let items = value.as_array().ok_or_else(|| violation(path, "expected an array of 3 numbers"))?;
    if items.len() != 3 {
        return Err(violation(path, format!("expected 3 numbers, found {}", items.len())));
    }
    let mut out = [0.0; 3];
    for (i, item) in items.iter().enumerate() {
        out[i] = item
            .as_f64()
            .filter(|f| f.is_finite())
            .ok_or_else(|| violation(format!("{path}/{i}"), "expected a finite number"))?;
    }
    Ok(Vec3::from(out))
}

/// Parses and validates a room-scan document without touching any scene.
pub fn parse_room_scan(document: &str) -> Result<Vec<RoomProxy>, FusionError> {
    let root: Value = serde_json::from_str(document).map_err(|e| violation("", e.to_string()))?;
    let obj = root.as_object().ok_or_else(|| violation("", "expected an object"))?;
    match obj.get("schema_version").and_then(Value::as_u64) {
        Some(ROOM_SCAN_SCHEMA_VERSION) => {}
        Some(v) => return Err(violation("/schema_version", format!("unsupported version {v}"))),
        None => return Err(violation("/schema_version", "required integer")),
    }
    let entries = match obj.get("proxies") {
        None => return Ok(Vec::new()),
        Some(v) => v.as_array().ok_or_else(|| violation("/proxies", "expected an array"))?,
    };
    let mut seen = BTreeSet::new();
    let mut proxies = Vec::with_capacity(entries.len());
    for (i, entry) in entries.iter().enumerate() {
        let base = format!("/proxies/{i}");
        let e = entry.as_object().ok_or_else(|| violation(&base, "expected an object"))?;
        let id = e
            .get("id")
            .and_then(Value::as_str)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| violation(format!("{base}/id"), "required non-empty string"))?;
        if !seen.insert(id.to_string()) {
            return Err(violation(format!("{base}/id"), format!("duplicate proxy id {id:?}")));
        }
        let kind = match e.get("kind").and_then(Value::as_str) {
            Some("plane") => ProxyKind::Plane,
            Some("volume") => ProxyKind::Volume,
            _ => return Err(violation(format!("{base}/kind"), "expected \"plane\" or \"volume\"")),
        };
        let tags = match e.get("tags") {
            None => BTreeSet::new(),
            Some(Value::Array(items)) => items
                .iter()
                .enumerate()
                .map(|(j, t)| {
                    t.as_str().map(str::to_string).ok_or_else(|| violation(format!("{base}/tags/{j}"), "expected a string"))
                })
                .collect::<Result<_, _>>()?,
            Some(_) => return Err(violation(format!("{base}/tags"), "expected an array of strings")),
        };
        let center = vec3_at(e.get("center").unwrap_or(&Value::Null), &format!("{base}/center"))?;
        let extents = vec3_at(e.get("extents").unwrap_or(&Value::Null), &format!("{base}/extents"))?;
        if extents.iter().any(|x| *x < 0.0) {
            return Err(violation(format!("{base}/extents"), "extents must be non-negative"));
        }
        if kind == ProxyKind::Plane && extents.y != 0.0 {
            return Err(violation(format!("{base}/extents/1"), "planes have zero vertical extent"));
        }
        let yaw_deg = match e.get("yaw_deg") {
            None => 0.0,
            Some(v) => v.as_f64().ok_or_else(|| violation(format!("{base}/yaw_deg"), "expected a number"))?,
        };
        proxies.push(RoomProxy {
            id: id.to_string(),
            generic_name: kind.generic_name().to_string(),
            tags,
            center,
            extents,
            yaw_deg,
            kind,
            object: None,
        });
    }
    Ok(proxies)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hand {
    Left,
    Right,
}

impl Hand {
    pub fn as_str(self) -> &'static str {
        match self {
            Hand::Left => "left",
            Hand::Right => "right",
        }
    }
}

impl fmt::Display for Hand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandPose {
    pub hand: Hand,
    pub palm_position: Vec3,
    #[serde(default)]
    pub palm_orientation: Euler,
    pub bones: BTreeMap<String, Vec3>,
    pub timestamp: f64,
}

impl HandPose {
    /// Pose with every bone at the palm; handy for synthetic input.
    pub fn at_palm(hand: Hand, palm_position: Vec3, timestamp: f64) -> Self {
        HandPose {
            hand,
            palm_position,
            palm_orientation: Euler::default(),
            bones: BONE_NAMES.iter().map(|b| (b.to_string(), palm_position)).collect(),
            timestamp,
        }
    }

    pub fn validate(&self) -> Result<(), FusionError> {
        for bone in BONE_NAMES {
            if !self.bones.contains_key(bone) {
                return Err(FusionError::InvalidPose(format!("missing bone {bone:?}")));
            }
        }
        if let Some(extra) = self.bones.keys().find(|k| !BONE_NAMES.contains(&k.as_str())) {
            return Err(FusionError::InvalidPose(format!("unknown bone {extra:?}")));
        }
        if !self.timestamp.is_finite() {
            return Err(FusionError::InvalidPose("timestamp must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadPose {
    pub position: Vec3,
    pub orientation: Euler,
}

impl Default for HeadPose {
    fn default() -> Self {
        HeadPose { position: Vec3::new(0.0, 1.6, 0.0), orientation: Euler::default() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct UserContext {
    pub head: HeadPose,
    pub hands: BTreeMap<Hand, HandPose>,
}

impl UserContext {
    /// 1.5 m ahead of the head along its horizontal heading, 0.3 m below it.
    pub fn spawn_point(&self) -> Vec3 {
        let fwd = self.head.orientation.to_quat() * crate::math::forward();
        let flat = Vec3::new(fwd.x, 0.0, fwd.z);
        let heading = if flat.norm() < 1e-9 {
            // looking straight up or down: fall back to the yaw alone
            Euler::yaw(self.head.orientation.yaw).to_quat() * crate::math::forward()
        } else {
            flat.normalize()
        };
        let p = self.head.position + heading * SPAWN_DISTANCE;
        Vec3::new(p.x, self.head.position.y - SPAWN_DROP, p.z)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "block", rename_all = "snake_case")]
pub enum BuildingBlock {
    Grabbable,
    HandFollow {
        hand: Hand,
        #[serde(default)]
        offset: [f64; 3],
    },
}

impl BuildingBlock {
    pub fn parse(value: &Value) -> Result<Self, FusionError> {
        let name = value.get("block").and_then(Value::as_str).unwrap_or_default();
        if !matches!(name, "grabbable" | "hand_follow") {
            return Err(FusionError::UnknownBlock(name.to_string()));
        }
        serde_json::from_value(value.clone()).map_err(|e| FusionError::InvalidCommand(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HandFollow {
    pub hand: Hand,
    pub offset: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
struct Grab {
    object: ObjectId,
    previous_parent: Option<ObjectId>,
}

/// Proxies, user tracking and per-object interaction constraints.
#[derive(Debug, Clone, Default)]
pub struct RealityFusion {
    proxies: Vec<RoomProxy>,
    user: UserContext,
    follows: BTreeMap<ObjectId, HandFollow>,
    anchors: BTreeMap<Hand, ObjectId>,
    grabs: BTreeMap<Hand, Grab>,
}

impl RealityFusion {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn proxies(&self) -> &[RoomProxy] {
        &self.proxies
    }

    pub fn user(&self) -> &UserContext {
        &self.user
    }

    pub fn set_head_pose(&mut self, head: HeadPose) {
        self.user.head = head;
    }

    /// Validates the whole document, then inserts each proxy as an
    /// invisible node. Nothing is inserted on error.
    pub fn load_room_scan(&mut self, document: &str, scene: &mut Scene) -> Result<Vec<RoomProxy>, FusionError> {
        let mut proxies = parse_room_scan(document)?;
        if let Some(dup) = proxies.iter().find(|p| self.proxies.iter().any(|q| q.id == p.id)) {
            return Err(violation("/proxies", format!("proxy id {:?} already loaded", dup.id)));
        }
        for proxy in &mut proxies {
            let dims = proxy.extents * 2.0;
            let primitive = match proxy.kind {
                ProxyKind::Plane => PrimitiveKind::Plane,
                ProxyKind::Volume => PrimitiveKind::Cube,
            };
            let mut spec = ObjectSpec::new(scene.unique_name(&proxy.generic_name));
            spec.transform = Transform::at(proxy.center).with_orientation(Euler::yaw(proxy.yaw_deg));
            spec.geometry = Some(Geometry::Primitive { primitive, dimensions: dims });
            spec.visible = false;
            spec.tags = proxy.tags.clone();
            spec.tags.insert("real_world".into());
            proxy.object = Some(scene.add_object(spec)?);
        }
        self.proxies.extend(proxies.iter().cloned());
        Ok(proxies)
    }

    /// Proxy with `tag`; the one nearest the head when several match.
    pub fn resolve_real_anchor(&self, tag: &str) -> Result<&RoomProxy, FusionError> {
        let head = self.user.head.position;
        self.proxies
            .iter()
            .filter(|p| p.tags.contains(tag))
            .min_by(|a, b| (a.center - head).norm().total_cmp(&(b.center - head).norm()))
            .ok_or_else(|| FusionError::NotFound(tag.to_string()))
    }

    pub fn update_hand_pose(&mut self, pose: HandPose) -> Result<(), FusionError> {
        pose.validate()?;
        if let Some(latest) = self.user.hands.get(&pose.hand) {
            if pose.timestamp < latest.timestamp {
                log::warn!("dropping stale {} hand pose", pose.hand);
                return Err(FusionError::StaleTimestamp {
                    hand: pose.hand,
                    timestamp: pose.timestamp,
                    latest: latest.timestamp,
                });
            }
        }
        self.user.hands.insert(pose.hand, pose);
        Ok(())
    }

    pub fn attach_building_block(
        &mut self,
        scene: &mut Scene,
        object: ObjectId,
        block: &BuildingBlock,
    ) -> Result<(), FusionError> {
        scene.get(object)?;
        match block {
            BuildingBlock::Grabbable => scene.get_mut(object)?.grabbable = true,
            BuildingBlock::HandFollow { hand, offset } => {
                self.follows.insert(object, HandFollow { hand: *hand, offset: Vec3::from(*offset) });
                self.apply_follow(scene, object)?;
            }
        }
        Ok(())
    }

    pub fn follow_of(&self, object: ObjectId) -> Option<&HandFollow> {
        self.follows.get(&object)
    }

    fn follow_target(&self, follow: &HandFollow) -> Vec3 {
        match self.user.hands.get(&follow.hand) {
            Some(pose) => pose.palm_position + pose.palm_orientation.to_quat() * follow.offset,
            None => self.user.spawn_point(),
        }
    }

    fn apply_follow(&self, scene: &mut Scene, object: ObjectId) -> Result<(), FusionError> {
        if let Some(follow) = self.follows.get(&object) {
            scene.set_world_position(object, self.follow_target(follow))?;
        }
        Ok(())
    }

    /// Re-places hand anchors and hand-following objects. Runs once per
    /// tick, after animations.
    pub fn apply_constraints(&self, scene: &mut Scene) -> Result<(), FusionError> {
        for (&hand, &anchor) in &self.anchors {
            if !scene.contains(anchor) {
                continue;
            }
            let follow = HandFollow { hand, offset: Vec3::zeros() };
            scene.set_world_position(anchor, self.follow_target(&follow))?;
            if let Some(pose) = self.user.hands.get(&hand) {
                scene.set_world_rotation(anchor, pose.palm_orientation.to_quat())?;
            }
        }
        let ids: Vec<ObjectId> = self.follows.keys().copied().collect();
        for id in ids {
            if scene.contains(id) {
                self.apply_follow(scene, id)?;
            }
        }
        Ok(())
    }

    fn anchor(&mut self, scene: &mut Scene, hand: Hand) -> Result<ObjectId, FusionError> {
        if let Some(&id) = self.anchors.get(&hand) {
            if scene.contains(id) {
                return Ok(id);
            }
        }
        let mut spec = ObjectSpec::new(scene.unique_name(&format!("hand_anchor_{hand}")));
        spec.visible = false;
        spec.tags.insert("hand_anchor".into());
        let id = scene.add_object(spec)?;
        self.anchors.insert(hand, id);
        let follow = HandFollow { hand, offset: Vec3::zeros() };
        scene.set_world_position(id, self.follow_target(&follow))?;
        if let Some(pose) = self.user.hands.get(&hand) {
            scene.set_world_rotation(id, pose.palm_orientation.to_quat())?;
        }
        Ok(id)
    }

    /// Reparents a grabbable object under the hand's anchor. A hand already
    /// holding something releases it first.
    pub fn pick(&mut self, scene: &mut Scene, object: ObjectId, hand: Hand) -> Result<(), FusionError> {
        let target = scene.get(object)?;
        if !target.grabbable {
            return Err(FusionError::NotGrabbable(target.name.clone()));
        }
        if self.grabs.contains_key(&hand) {
            self.release(scene, hand)?;
        }
        let previous_parent = scene.get(object)?.parent;
        let anchor = self.anchor(scene, hand)?;
        scene.set_parent(object, Some(anchor), true)?;
        self.grabs.insert(hand, Grab { object, previous_parent });
        Ok(())
    }

    /// Restores the held object's previous parent, keeping its world pose.
    /// The anchor is first moved to the latest hand pose, so a pose that
    /// arrived since the last tick still counts.
    pub fn release(&mut self, scene: &mut Scene, hand: Hand) -> Result<ObjectId, FusionError> {
        if !self.grabs.contains_key(&hand) {
            return Err(FusionError::NothingHeld(hand));
        }
        self.apply_constraints(scene)?;
        let grab = self.grabs.remove(&hand).expect("checked above");
        let parent = grab.previous_parent.filter(|p| scene.contains(*p));
        scene.set_parent(grab.object, parent, true)?;
        Ok(grab.object)
    }

    pub fn held(&self, hand: Hand) -> Option<ObjectId> {
        self.grabs.get(&hand).map(|g| g.object)
    }

    /// Drops constraints that mention a destroyed object.
    pub fn forget_object(&mut self, object: ObjectId) {
        self.follows.remove(&object);
        self.grabs.retain(|_, g| g.object != object);
        self.anchors.retain(|_, a| *a != object);
        for proxy in &mut self.proxies {
            if proxy.object == Some(object) {
                proxy.object = None;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const TABLE_SCAN: &str = r#"{"schema_version":1,"proxies":[
        {"id":"table_1","kind":"volume","tags":["table"],"center":[0,0.35,1],"extents":[0.8,0.35,0.5],"yaw_deg":0}
    ]}"#;

    #[test]
    fn empty_scan_inserts_nothing() {
        let mut fusion = RealityFusion::new();
        let mut scene = Scene::new();
        let proxies = fusion.load_room_scan(r#"{"schema_version":1,"proxies":[]}"#, &mut scene).unwrap();
        assert!(proxies.is_empty());
        assert!(scene.is_empty());
    }

    #[test]
    fn table_volume_top_surface() {
        let mut fusion = RealityFusion::new();
        let mut scene = Scene::new();
        let proxies = fusion.load_room_scan(TABLE_SCAN, &mut scene).unwrap();
        assert_relative_eq!(proxies[0].top(), 0.7);
        let object = scene.get(proxies[0].object.unwrap()).unwrap();
        assert!(!object.visible && !object.physics && !object.is_placeholder());
        assert_eq!(object.name, "invisible volume");
        assert!(object.tags.contains("table"));
        let b = scene.world_bounds(object.id).unwrap().unwrap();
        assert_relative_eq!(b.top(), 0.7, epsilon = 1e-12);
    }

    #[test]
    fn scan_violations_carry_paths() {
        let dup = r#"{"schema_version":1,"proxies":[
            {"id":"a","kind":"volume","center":[0,0,0],"extents":[1,1,1]},
            {"id":"a","kind":"volume","center":[0,0,0],"extents":[1,1,1]}]}"#;
        assert!(matches!(parse_room_scan(dup), Err(FusionError::SchemaViolation { ref path, .. }) if path == "/proxies/1/id"));
        let neg = r#"{"schema_version":1,"proxies":[{"id":"a","kind":"volume","center":[0,0,0],"extents":[1,-1,1]}]}"#;
        assert!(matches!(parse_room_scan(neg), Err(FusionError::SchemaViolation { ref path, .. }) if path == "/proxies/0/extents"));
        let plane = r#"{"schema_version":1,"proxies":[{"id":"f","kind":"plane","center":[0,0,0],"extents":[1,0.1,1]}]}"#;
        assert!(matches!(parse_room_scan(plane), Err(FusionError::SchemaViolation { ref path, .. }) if path == "/proxies/0/extents/1"));
        let short = r#"{"schema_version":1,"proxies":[{"id":"a","kind":"volume","center":[0,0],"extents":[1,1,1]}]}"#;
        assert!(matches!(parse_room_scan(short), Err(FusionError::SchemaViolation { ref path, .. }) if path == "/proxies/0/center"));
    }

    #[test]
    fn anchor_resolution_prefers_nearest_table() {
        let mut fusion = RealityFusion::new();
        let mut scene = Scene::new();
        fusion
            .load_room_scan(
                r#"{"schema_version":1,"proxies":[
                {"id":"far","kind":"volume","tags":["table"],"center":[0,1.6,3],"extents":[0.5,0.3,0.5]},
                {"id":"near","kind":"volume","tags":["table"],"center":[0,1.6,1],"extents":[0.5,0.3,0.5]}]}"#,
                &mut scene,
            )
            .unwrap();
        assert_eq!(fusion.resolve_real_anchor("table").unwrap().id, "near");
        assert_eq!(fusion.resolve_real_anchor("couch"), Err(FusionError::NotFound("couch".into())));
    }

    #[test]
    fn stale_pose_dropped() {
        let mut fusion = RealityFusion::new();
        fusion.update_hand_pose(HandPose::at_palm(Hand::Right, Vec3::new(0.0, 1.0, 0.5), 2.0)).unwrap();
        assert!(fusion.user().hands.contains_key(&Hand::Right));
        let stale = HandPose::at_palm(Hand::Right, Vec3::new(9.0, 9.0, 9.0), 1.0);
        assert!(matches!(fusion.update_hand_pose(stale), Err(FusionError::StaleTimestamp { .. })));
        assert_eq!(fusion.user().hands[&Hand::Right].palm_position, Vec3::new(0.0, 1.0, 0.5));
    }

    #[test]
    fn pose_missing_bone_rejected() {
        let mut pose = HandPose::at_palm(Hand::Left, Vec3::zeros(), 0.0);
        pose.bones.remove("pinky_3");
        assert!(matches!(pose.validate(), Err(FusionError::InvalidPose(_))));
    }

    #[test]
    fn hand_follow_without_pose_uses_spawn_point() {
        let mut fusion = RealityFusion::new();
        let mut scene = Scene::new();
        let cube = scene.add_object(ObjectSpec::primitive("cube_1", PrimitiveKind::Cube)).unwrap();
        let block = BuildingBlock::HandFollow { hand: Hand::Right, offset: [0.0, 0.1, 0.0] };
        fusion.attach_building_block(&mut scene, cube, &block).unwrap();
        assert_relative_eq!(scene.world_position(cube).unwrap(), Vec3::new(0.0, 1.3, 1.5), epsilon = 1e-12);
        fusion.update_hand_pose(HandPose::at_palm(Hand::Right, Vec3::new(0.2, 1.0, 0.4), 0.0)).unwrap();
        fusion.apply_constraints(&mut scene).unwrap();
        assert_relative_eq!(scene.world_position(cube).unwrap(), Vec3::new(0.2, 1.1, 0.4), epsilon = 1e-12);
    }

    #[test]
    fn unknown_block_rejected() {
        let v = serde_json::json!({"object":"x","block":"teleport"});
        assert_eq!(BuildingBlock::parse(&v), Err(FusionError::UnknownBlock("teleport".into())));
        let ok = serde_json::json!({"object":"x","block":"hand_follow","hand":"left","offset":[0,0.1,0]});
        assert_eq!(
            BuildingBlock::parse(&ok).unwrap(),
            BuildingBlock::HandFollow { hand: Hand::Left, offset: [0.0, 0.1, 0.0] }
        );
    }

    #[test]
    fn pick_and_release_restore_parent() {
        let mut fusion = RealityFusion::new();
        let mut scene = Scene::new();
        let shelf = scene.add_object(ObjectSpec::new("shelf").at(Vec3::new(1.0, 0.0, 0.0))).unwrap();
        let cube = scene
            .add_object(ObjectSpec::primitive("cube", PrimitiveKind::Cube).at(Vec3::new(0.0, 1.0, 0.0)).parent(shelf))
            .unwrap();
        assert!(matches!(fusion.pick(&mut scene, cube, Hand::Right), Err(FusionError::NotGrabbable(_))));
        fusion.attach_building_block(&mut scene, cube, &BuildingBlock::Grabbable).unwrap();
        fusion.update_hand_pose(HandPose::at_palm(Hand::Right, Vec3::new(1.0, 1.0, 0.0), 0.0)).unwrap();
        fusion.pick(&mut scene, cube, Hand::Right).unwrap();
        assert_ne!(scene.get(cube).unwrap().parent, Some(shelf));
        fusion.update_hand_pose(HandPose::at_palm(Hand::Right, Vec3::new(1.5, 1.0, 0.0), 0.1)).unwrap();
        fusion.apply_constraints(&mut scene).unwrap();
        assert_relative_eq!(scene.world_position(cube).unwrap(), Vec3::new(1.5, 1.0, 0.0), epsilon = 1e-12);
        assert_eq!(fusion.release(&mut scene, Hand::Right).unwrap(), cube);
        assert_eq!(scene.get(cube).unwrap().parent, Some(shelf));
        assert_relative_eq!(scene.world_position(cube).unwrap(), Vec3::new(1.5, 1.0, 0.0), epsilon = 1e-12);
        assert_eq!(fusion.release(&mut scene, Hand::Right), Err(FusionError::NothingHeld(Hand::Right)));
    }
}
