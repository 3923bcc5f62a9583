//! Scene graph: named objects in a parent forest, transform composition,
//! reference resolution and snapshots.

use crate::math::{trs_matrix, transform_point, Euler, Quat, Rgba, Vec3};
use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub u64);

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("an object named {0:?} already exists")]
    DuplicateName(String),
    #[error("parent {0} does not exist")]
    UnknownParent(ObjectId),
    #[error("object {0} does not exist")]
    UnknownObject(ObjectId),
    #[error("parenting {child} under {parent} would create a cycle")]
    CycleDetected { child: ObjectId, parent: ObjectId },
    #[error("no object matches {0}")]
    NotFound(String),
    #[error("{0} matches more than one object")]
    AmbiguousName(String),
    #[error("invalid transform: {0}")]
    InvalidTransform(String),
    #[error("object name must not be empty")]
    EmptyName,
}

/// Local transform relative to the parent (or world, for roots).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transform {
    pub position: Vec3,
    pub orientation: Euler,
    pub scale: Vec3,
}

impl Default for Transform {
    fn default() -> Self {
        Transform {
            position: Vec3::zeros(),
            orientation: Euler::default(),
            scale: Vec3::new(1.0, 1.0, 1.0),
        }
    }
}

impl Transform {
    pub fn at(position: Vec3) -> Self {
        Transform { position, ..Default::default() }
    }

    pub fn with_orientation(mut self, orientation: Euler) -> Self {
        self.orientation = orientation;
        self
    }

    pub fn with_scale(mut self, scale: Vec3) -> Self {
        self.scale = scale;
        self
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if self.scale.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(SceneError::InvalidTransform(format!(
                "scale components must be positive, got {:?}",
                self.scale.as_slice()
            )));
        }
        if self.position.iter().any(|p| !p.is_finite()) {
            return Err(SceneError::InvalidTransform("position must be finite".into()));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix4<f64> {
        trs_matrix(&self.position, &self.orientation.to_quat(), &self.scale)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimitiveKind {
    Cube,
    Sphere,
    Cylinder,
    Capsule,
    Plane,
}

impl PrimitiveKind {
    pub const ALL: [PrimitiveKind; 5] = [
        PrimitiveKind::Cube,
        PrimitiveKind::Sphere,
        PrimitiveKind::Cylinder,
        PrimitiveKind::Capsule,
        PrimitiveKind::Plane,
    ];

    /// Size of the unscaled primitive, centered on its origin.
    pub fn unit_dimensions(self) -> Vec3 {
        match self {
            PrimitiveKind::Cube | PrimitiveKind::Sphere => Vec3::new(1.0, 1.0, 1.0),
            PrimitiveKind::Cylinder | PrimitiveKind::Capsule => Vec3::new(1.0, 2.0, 1.0),
            PrimitiveKind::Plane => Vec3::new(1.0, 0.0, 1.0),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PrimitiveKind::Cube => "cube",
            PrimitiveKind::Sphere => "sphere",
            PrimitiveKind::Cylinder => "cylinder",
            PrimitiveKind::Capsule => "capsule",
            PrimitiveKind::Plane => "plane",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        let lower = name.trim().to_ascii_lowercase();
        PrimitiveKind::ALL.into_iter().find(|k| k.as_str() == lower)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Geometry {
    Primitive { primitive: PrimitiveKind, dimensions: Vec3 },
    /// Root of an expanded prefab; bounds enclose its parts in root-local units.
    Prefab { prefab: String, bounds_min: Vec3, bounds_max: Vec3 },
}

impl Geometry {
    pub fn primitive(kind: PrimitiveKind) -> Self {
        Geometry::Primitive { primitive: kind, dimensions: kind.unit_dimensions() }
    }

    pub fn kind(&self) -> GeometryKind {
        match self {
            Geometry::Primitive { primitive, .. } => GeometryKind::Primitive(*primitive),
            Geometry::Prefab { .. } => GeometryKind::Prefab,
        }
    }

    /// Unscaled local bounds as `(min, max)`.
    pub fn local_bounds(&self) -> (Vec3, Vec3) {
        match self {
            Geometry::Primitive { dimensions, .. } => (-dimensions / 2.0, dimensions / 2.0),
            Geometry::Prefab { bounds_min, bounds_max, .. } => (*bounds_min, *bounds_max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum GeometryKind {
    Primitive(PrimitiveKind),
    Prefab,
}

impl GeometryKind {
    pub fn parse(name: &str) -> Option<Self> {
        if name.trim().eq_ignore_ascii_case("prefab") {
            return Some(GeometryKind::Prefab);
        }
        PrimitiveKind::parse(name).map(GeometryKind::Primitive)
    }
}

/// Axis-aligned box in world space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub center: Vec3,
    pub half: Vec3,
}

impl Aabb {
    pub fn bottom(&self) -> f64 {
        self.center.y - self.half.y
    }

    pub fn top(&self) -> f64 {
        self.center.y + self.half.y
    }

    pub fn size(&self) -> Vec3 {
        self.half * 2.0
    }
}

/// Everything needed to insert an object; the scene assigns the id.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectSpec {
    pub name: String,
    pub transform: Transform,
    pub parent: Option<ObjectId>,
    pub color: Rgba,
    pub geometry: Option<Geometry>,
    pub physics: bool,
    pub grabbable: bool,
    pub visible: bool,
    pub tags: BTreeSet<String>,
}

impl ObjectSpec {
    pub fn new(name: impl Into<String>) -> Self {
        ObjectSpec {
            name: name.into(),
            transform: Transform::default(),
            parent: None,
            color: Rgba::default(),
            geometry: None,
            physics: false,
            grabbable: false,
            visible: true,
            tags: BTreeSet::new(),
        }
    }

    pub fn primitive(name: impl Into<String>, kind: PrimitiveKind) -> Self {
        ObjectSpec { geometry: Some(Geometry::primitive(kind)), ..ObjectSpec::new(name) }
    }

    pub fn at(mut self, position: Vec3) -> Self {
        self.transform.position = position;
        self
    }

    pub fn transform(mut self, transform: Transform) -> Self {
        self.transform = transform;
        self
    }

    pub fn parent(mut self, parent: ObjectId) -> Self {
        self.parent = Some(parent);
        self
    }

    pub fn tag(mut self, tag: impl Into<String>) -> Self {
        self.tags.insert(tag.into());
        self
    }

    pub fn physics(mut self, on: bool) -> Self {
        self.physics = on;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneObject {
    pub id: ObjectId,
    pub name: String,
    pub transform: Transform,
    pub parent: Option<ObjectId>,
    pub color: Rgba,
    pub geometry: Option<Geometry>,
    pub physics: bool,
    pub grabbable: bool,
    pub visible: bool,
    pub tags: BTreeSet<String>,
}

impl SceneObject {
    /// Geometry-less nodes only serve as coordinate frames.
    pub fn is_placeholder(&self) -> bool {
        self.geometry.is_none()
    }
}

/// How a command names an object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Reference {
    Name(String),
    Named { name: String },
    Tagged { tag: String },
    Nearest {
        nearest_to: [f64; 3],
        #[serde(default, skip_serializing_if = "Option::is_none")]
        kind: Option<String>,
    },
}

impl Reference {
    pub fn name(name: impl Into<String>) -> Self {
        Reference::Name(name.into())
    }
}

impl fmt::Display for Reference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reference::Name(n) | Reference::Named { name: n } => write!(f, "{n}"),
            Reference::Tagged { tag } => write!(f, "tag:{tag}"),
            Reference::Nearest { nearest_to, kind } => {
                let [x, y, z] = nearest_to;
                match kind {
                    Some(k) => write!(f, "nearest {k} to ({x},{y},{z})"),
                    None => write!(f, "nearest to ({x},{y},{z})"),
                }
            }
        }
    }
}

/// World-space pose of an object. `scale` is the lossy product of the
/// chain's scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WorldTransform {
    pub position: Vec3,
    pub orientation: Euler,
    pub scale: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObjectState {
    pub id: ObjectId,
    pub name: String,
    pub parent: Option<ObjectId>,
    pub local: Transform,
    pub world: WorldTransform,
    pub color: Rgba,
    pub geometry: Option<Geometry>,
    pub physics: bool,
    pub grabbable: bool,
    pub visible: bool,
    pub placeholder: bool,
    pub tags: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActiveAnimation {
    pub id: String,
    pub unit: String,
    pub subject: String,
    pub progress: f64,
}

/// Immutable view of the scene at one tick.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneSnapshot {
    pub tick: u64,
    pub objects: Vec<ObjectState>,
    pub active_animations: Vec<ActiveAnimation>,
}

impl SceneSnapshot {
    pub fn to_canonical_json(&self) -> String {
        crate::canonical::to_string(self)
    }

    pub fn object(&self, name: &str) -> Option<&ObjectState> {
        self.objects.iter().find(|o| o.name == name)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Scene {
    objects: BTreeMap<ObjectId, SceneObject>,
    names: BTreeMap<String, ObjectId>,
    next_id: u64,
}

impl Scene {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    /// Objects in creation order.
    pub fn objects(&self) -> impl Iterator<Item = &SceneObject> {
        self.objects.values()
    }

    pub fn get(&self, id: ObjectId) -> Result<&SceneObject, SceneError> {
        self.objects.get(&id).ok_or(SceneError::UnknownObject(id))
    }

    pub fn get_mut(&mut self, id: ObjectId) -> Result<&mut SceneObject, SceneError> {
        self.objects.get_mut(&id).ok_or(SceneError::UnknownObject(id))
    }

    pub fn id_of(&self, name: &str) -> Option<ObjectId> {
        self.names.get(name).copied()
    }

    pub fn contains(&self, id: ObjectId) -> bool {
        self.objects.contains_key(&id)
    }

    /// `base` if free, otherwise the first free `base-2`, `base-3`, ...
    pub fn unique_name(&self, base: &str) -> String {
        if !self.names.contains_key(base) {
            return base.to_string();
        }
        (2u64..)
            .map(|n| format!("{base}-{n}"))
            .find(|candidate| !self.names.contains_key(candidate))
            .expect("unbounded suffix search")
    }

    pub fn add_object(&mut self, spec: ObjectSpec) -> Result<ObjectId, SceneError> {
        if spec.name.trim().is_empty() {
            return Err(SceneError::EmptyName);
        }
        if self.names.contains_key(&spec.name) {
            return Err(SceneError::DuplicateName(spec.name));
        }
        if let Some(parent) = spec.parent {
            if !self.objects.contains_key(&parent) {
                return Err(SceneError::UnknownParent(parent));
            }
        }
        spec.transform.validate()?;
        let id = ObjectId(self.next_id);
        self.next_id += 1;
        let mut transform = spec.transform;
        transform.orientation = Euler::new(
            transform.orientation.yaw,
            transform.orientation.pitch,
            transform.orientation.roll,
        );
        self.names.insert(spec.name.clone(), id);
        self.objects.insert(
            id,
            SceneObject {
                id,
                name: spec.name,
                transform,
                parent: spec.parent,
                color: spec.color,
                geometry: spec.geometry,
                physics: spec.physics,
                grabbable: spec.grabbable,
                visible: spec.visible,
                tags: spec.tags,
            },
        );
        Ok(id)
    }

    pub fn children(&self, id: ObjectId) -> Vec<ObjectId> {
        self.objects.values().filter(|o| o.parent == Some(id)).map(|o| o.id).collect()
    }

    /// Ancestor chain from `id` up to its root, starting with `id`.
    fn chain(&self, id: ObjectId) -> Result<Vec<&SceneObject>, SceneError> {
        let mut out = Vec::new();
        let mut cursor = Some(id);
        while let Some(current) = cursor {
            let object = self.get(current)?;
            out.push(object);
            cursor = object.parent;
        }
        Ok(out)
    }

    pub fn world_matrix(&self, id: ObjectId) -> Result<Matrix4<f64>, SceneError> {
        let chain = self.chain(id)?;
        Ok(chain.iter().rev().fold(Matrix4::identity(), |acc, o| acc * o.transform.matrix()))
    }

    pub fn world_rotation(&self, id: ObjectId) -> Result<Quat, SceneError> {
        let chain = self.chain(id)?;
        Ok(chain
            .iter()
            .rev()
            .fold(Quat::identity(), |acc, o| acc * o.transform.orientation.to_quat()))
    }

    pub fn world_scale(&self, id: ObjectId) -> Result<Vec3, SceneError> {
        let chain = self.chain(id)?;
        Ok(chain
            .iter()
            .fold(Vec3::new(1.0, 1.0, 1.0), |acc, o| acc.component_mul(&o.transform.scale)))
    }

    pub fn world_position(&self, id: ObjectId) -> Result<Vec3, SceneError> {
        self.local_to_world(id, &Vec3::zeros())
    }

    pub fn world_transform(&self, id: ObjectId) -> Result<WorldTransform, SceneError> {
        Ok(WorldTransform {
            position: self.world_position(id)?,
            orientation: Euler::from_quat(&self.world_rotation(id)?),
            scale: self.world_scale(id)?,
        })
    }

    /// Maps a point in the object's local frame to world space.
    pub fn local_to_world(&self, id: ObjectId, point: &Vec3) -> Result<Vec3, SceneError> {
        Ok(transform_point(&self.world_matrix(id)?, point))
    }

    pub fn world_to_local(&self, id: ObjectId, point: &Vec3) -> Result<Vec3, SceneError> {
        let m = self.world_matrix(id)?;
        let inv = m
            .try_inverse()
            .ok_or_else(|| SceneError::InvalidTransform(format!("{id} has a singular world matrix")))?;
        Ok(transform_point(&inv, point))
    }

    /// Point in the parent's frame (world for roots) that lands on `world`.
    fn parent_local_point(&self, parent: Option<ObjectId>, world: &Vec3) -> Result<Vec3, SceneError> {
        match parent {
            Some(p) => self.world_to_local(p, world),
            None => Ok(*world),
        }
    }

    pub fn set_world_position(&mut self, id: ObjectId, world: Vec3) -> Result<(), SceneError> {
        let parent = self.get(id)?.parent;
        let local = self.parent_local_point(parent, &world)?;
        self.get_mut(id)?.transform.position = local;
        Ok(())
    }

    pub fn set_world_rotation(&mut self, id: ObjectId, rotation: Quat) -> Result<(), SceneError> {
        let parent_rot = match self.get(id)?.parent {
            Some(p) => self.world_rotation(p)?,
            None => Quat::identity(),
        };
        self.get_mut(id)?.transform.orientation = Euler::from_quat(&(parent_rot.inverse() * rotation));
        Ok(())
    }

    /// Sets the lossy world scale by dividing out the parent chain.
    pub fn set_world_scale(&mut self, id: ObjectId, scale: Vec3) -> Result<(), SceneError> {
        let parent_scale = match self.get(id)?.parent {
            Some(p) => self.world_scale(p)?,
            None => Vec3::new(1.0, 1.0, 1.0),
        };
        let local = scale.component_div(&parent_scale);
        let candidate = Transform { scale: local, ..self.get(id)?.transform };
        candidate.validate()?;
        self.get_mut(id)?.transform.scale = local;
        Ok(())
    }

    pub fn set_parent(
        &mut self,
        child: ObjectId,
        parent: Option<ObjectId>,
        preserve_world: bool,
    ) -> Result<(), SceneError> {
        self.get(child)?;
        if let Some(p) = parent {
            self.get(p)?;
            let mut cursor = Some(p);
            while let Some(current) = cursor {
                if current == child {
                    return Err(SceneError::CycleDetected { child, parent: p });
                }
                cursor = self.get(current)?.parent;
            }
        }
        if !preserve_world {
            self.get_mut(child)?.parent = parent;
            return Ok(());
        }
        let world_pos = self.world_position(child)?;
        let world_rot = self.world_rotation(child)?;
        let world_scale = self.world_scale(child)?;
        let (parent_rot, parent_scale) = match parent {
            Some(p) => (self.world_rotation(p)?, self.world_scale(p)?),
            None => (Quat::identity(), Vec3::new(1.0, 1.0, 1.0)),
        };
        let position = self.parent_local_point(parent, &world_pos)?;
        let object = self.get_mut(child)?;
        object.parent = parent;
        object.transform.position = position;
        object.transform.orientation = Euler::from_quat(&(parent_rot.inverse() * world_rot));
        object.transform.scale = world_scale.component_div(&parent_scale);
        Ok(())
    }

    /// Removes `id`; its children splice onto its parent, keeping their
    /// world transforms. Returns the spliced children.
    pub fn destroy_object(&mut self, id: ObjectId) -> Result<Vec<ObjectId>, SceneError> {
        let grandparent = self.get(id)?.parent;
        let children = self.children(id);
        for &child in &children {
            self.set_parent(child, grandparent, true)?;
        }
        let removed = self.objects.remove(&id).expect("checked above");
        self.names.remove(&removed.name);
        Ok(children)
    }

    pub fn rename(&mut self, id: ObjectId, name: &str) -> Result<(), SceneError> {
        if self.names.contains_key(name) {
            return Err(SceneError::DuplicateName(name.into()));
        }
        let old = std::mem::replace(&mut self.get_mut(id)?.name, name.to_string());
        self.names.remove(&old);
        self.names.insert(name.to_string(), id);
        Ok(())
    }

    /// World-space box, axis-aligned after scale; rotation is ignored.
    /// `None` for placeholders.
    pub fn world_bounds(&self, id: ObjectId) -> Result<Option<Aabb>, SceneError> {
        let object = self.get(id)?;
        let Some(geometry) = &object.geometry else {
            return Ok(None);
        };
        let (min, max) = geometry.local_bounds();
        let center_local = (min + max) / 2.0;
        let half_local = (max - min) / 2.0;
        let scale = self.world_scale(id)?.abs();
        Ok(Some(Aabb {
            center: self.local_to_world(id, &center_local)?,
            half: half_local.component_mul(&scale),
        }))
    }

    pub fn resolve_reference(&self, reference: &Reference) -> Result<ObjectId, SceneError> {
        match reference {
            Reference::Name(name) | Reference::Named { name } => {
                self.id_of(name).ok_or_else(|| SceneError::NotFound(name.clone()))
            }
            Reference::Tagged { tag } => {
                let mut matches = self.objects.values().filter(|o| o.tags.contains(tag));
                let first = matches.next().ok_or_else(|| SceneError::NotFound(format!("tag:{tag}")))?;
                if matches.next().is_some() {
                    return Err(SceneError::AmbiguousName(format!("tag:{tag}")));
                }
                Ok(first.id)
            }
            Reference::Nearest { nearest_to, kind } => {
                let point = Vec3::from(*nearest_to);
                let filter = match kind {
                    Some(k) => Some(
                        GeometryKind::parse(k)
                            .ok_or_else(|| SceneError::NotFound(format!("geometry kind {k}")))?,
                    ),
                    None => None,
                };
                self.nearest(&point, filter)
                    .ok_or_else(|| SceneError::NotFound(reference.to_string()))
            }
        }
    }

    /// Closest object by world position; ties go to the earliest created.
    pub fn nearest(&self, point: &Vec3, kind: Option<GeometryKind>) -> Option<ObjectId> {
        let mut best: Option<(f64, ObjectId)> = None;
        for object in self.objects.values() {
            if let Some(k) = kind {
                if object.geometry.as_ref().map(Geometry::kind) != Some(k) {
                    continue;
                }
            }
            let Ok(position) = self.world_position(object.id) else { continue };
            let d = (position - point).norm_squared();
            // strict comparison keeps the earlier id on ties
            if best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, object.id));
            }
        }
        best.map(|(_, id)| id)
    }

    pub fn snapshot(&self, tick: u64, active: Vec<ActiveAnimation>) -> SceneSnapshot {
        let objects = self
            .objects
            .values()
            .map(|o| ObjectState {
                id: o.id,
                name: o.name.clone(),
                parent: o.parent,
                local: o.transform,
                world: self.world_transform(o.id).expect("live object has a valid chain"),
                color: o.color,
                geometry: o.geometry.clone(),
                physics: o.physics,
                grabbable: o.grabbable,
                visible: o.visible,
                placeholder: o.is_placeholder(),
                tags: o.tags.clone(),
            })
            .collect();
        SceneSnapshot { tick, objects, active_animations: active }
    }
}
