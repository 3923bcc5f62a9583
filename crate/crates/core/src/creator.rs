//! Object creation from prefabs or primitives, plus the support pass that
//! settles physics objects onto surfaces.

use crate::fusion::RoomProxy;
use crate::math::{Euler, Rgba, Vec3};
use crate::scene::{Geometry, ObjectId, ObjectSpec, PrimitiveKind, Scene, SceneError, Transform};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

pub const PREFAB_SCHEMA_VERSION: u32 = 1;
/// Vertical tolerance for "already resting".
pub const SUPPORT_TOLERANCE: f64 = 1e-3;
/// Supports further below than this are ignored.
pub const SUPPORT_SEARCH_DEPTH: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CreatorError {
    #[error("object {0:?} names neither a prefab nor a primitive")]
    MissingSource(String),
    #[error("prefab {prefab:?} requested by {object:?} is not in the registry")]
    UnknownPrefab { object: String, prefab: String },
    #[error("unknown primitive {0:?}")]
    UnknownPrimitive(String),
    #[error("unknown color {0:?}")]
    UnknownColor(String),
    #[error("object {0:?} uses the local frame without a parent")]
    LocalFrameWithoutParent(String),
    #[error("parent {parent:?} of {object:?} does not exist")]
    UnknownParent { object: String, parent: String },
    #[error("malformed creation command: {0}")]
    InvalidCommand(String),
    #[error("prefab registry invalid at {path}: {message}")]
    Registry { path: String, message: String },
    #[error(transparent)]
    Scene(#[from] SceneError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefabPart {
    pub primitive: PrimitiveKind,
    #[serde(default = "zero3")]
    pub local_position: [f64; 3],
    #[serde(default = "zero3")]
    pub local_euler: [f64; 3],
    #[serde(default = "one3")]
    pub local_scale: [f64; 3],
    #[serde(default = "default_part_color")]
    pub color: Rgba,
    /// Index of an earlier part; `None` hangs the part off the root.
    #[serde(default)]
    pub parent: Option<usize>,
}

fn zero3() -> [f64; 3] {
    [0.0; 3]
}

fn one3() -> [f64; 3] {
    [1.0; 3]
}

fn default_part_color() -> Rgba {
    Rgba::LIGHT_GRAY
}

impl PrefabPart {
    fn transform(&self) -> Transform {
        Transform {
            position: Vec3::from(self.local_position),
            orientation: Euler::from(self.local_euler),
            scale: Vec3::from(self.local_scale),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prefab {
    pub name: String,
    #[serde(default)]
    pub tags: BTreeSet<String>,
    #[serde(default = "one3")]
    pub default_scale: [f64; 3],
    pub parts: Vec<PrefabPart>,
}

impl Prefab {
    /// Root-local bounds of all parts (part rotation ignored).
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut matrices: Vec<nalgebra::Matrix4<f64>> = Vec::with_capacity(self.parts.len());
        let mut scales: Vec<Vec3> = Vec::with_capacity(self.parts.len());
        let mut min = Vec3::repeat(f64::INFINITY);
        let mut max = Vec3::repeat(f64::NEG_INFINITY);
        for part in &self.parts {
            let t = part.transform();
            let (parent_m, parent_s) = match part.parent {
                Some(i) => (matrices[i], scales[i]),
                None => (nalgebra::Matrix4::identity(), Vec3::repeat(1.0)),
            };
            let m = parent_m * t.matrix();
            let s = parent_s.component_mul(&t.scale);
            let center = crate::math::transform_point(&m, &Vec3::zeros());
            let half = part.primitive.unit_dimensions().component_mul(&s.abs()) / 2.0;
            min = min.inf(&(center - half));
            max = max.sup(&(center + half));
            matrices.push(m);
            scales.push(s);
        }
        if self.parts.is_empty() {
            return (Vec3::zeros(), Vec3::zeros());
        }
        (min, max)
    }

    /// Footprint at the default scale.
    pub fn size(&self) -> Vec3 {
        let (min, max) = self.bounds();
        (max - min).component_mul(&Vec3::from(self.default_scale))
    }

    /// Furniture and supplies default to physics on.
    pub fn physics_by_default(&self) -> bool {
        self.tags.iter().any(|t| t == "furniture" || t == "supply")
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PrefabRegistry {
    entries: BTreeMap<String, Prefab>,
}

#[derive(Deserialize)]
struct RegistryFile {
    schema_version: u32,
    #[serde(default)]
    prefabs: Vec<Prefab>,
}

impl PrefabRegistry {
    pub fn from_json(text: &str) -> Result<Self, CreatorError> {
        let file: RegistryFile = serde_json::from_str(text).map_err(|e| CreatorError::Registry {
            path: format!("line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        if file.schema_version != PREFAB_SCHEMA_VERSION {
            return Err(CreatorError::Registry {
                path: "/schema_version".into(),
                message: format!("expected {PREFAB_SCHEMA_VERSION}, found {}", file.schema_version),
            });
        }
        let mut registry = PrefabRegistry::default();
        for (i, prefab) in file.prefabs.into_iter().enumerate() {
            registry.insert(prefab).map_err(|message| CreatorError::Registry {
                path: format!("/prefabs/{i}"),
                message,
            })?;
        }
        Ok(registry)
    }

    pub fn insert(&mut self, prefab: Prefab) -> Result<(), String> {
        if prefab.name.trim().is_empty() {
            return Err("prefab name must not be empty".into());
        }
        if self.entries.contains_key(&prefab.name) {
            return Err(format!("duplicate prefab name {:?}", prefab.name));
        }
        if prefab.default_scale.iter().any(|s| !(*s > 0.0)) {
            return Err("default_scale components must be positive".into());
        }
        for (j, part) in prefab.parts.iter().enumerate() {
            if let Some(p) = part.parent {
                if p >= j {
                    return Err(format!("parts/{j}: parent index {p} must reference an earlier part"));
                }
            }
            if part.local_scale.iter().any(|s| !(*s > 0.0)) {
                return Err(format!("parts/{j}: local_scale components must be positive"));
            }
        }
        self.entries.insert(prefab.name.clone(), prefab);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Prefab> {
        self.entries.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Prefab> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Case-insensitive substring match in either direction; the longest
    /// prefab name wins, then alphabetical order.
    pub fn fuzzy_match(&self, object_name: &str) -> Option<&Prefab> {
        let needle = object_name.to_ascii_lowercase();
        self.entries
            .values()
            .filter(|p| {
                let name = p.name.to_ascii_lowercase();
                needle.contains(&name) || name.contains(&needle)
            })
            .max_by(|a, b| a.name.len().cmp(&b.name.len()).then_with(|| b.name.cmp(&a.name)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Prefab(String),
    Primitive(PrimitiveKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    #[default]
    World,
    Local,
}

/// One object to create, with defaults resolved.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CreationSpec {
    pub name: String,
    pub source: Source,
    pub position: Vec3,
    pub orientation: Euler,
    pub scale: Vec3,
    /// `None` keeps a prefab's part colors.
    pub color: Option<Rgba>,
    pub parent: Option<String>,
    pub physics: bool,
    pub frame: Frame,
    pub tags: BTreeSet<String>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ScaleInput {
    Uniform(f64),
    Axes([f64; 3]),
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ColorInput {
    Named(String),
    Channels(Vec<f64>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    name: String,
    #[serde(default)]
    prefab: Option<String>,
    #[serde(default)]
    primitive: Option<String>,
    #[serde(default)]
    position: Option<[f64; 3]>,
    #[serde(default)]
    orientation: Option<[f64; 3]>,
    #[serde(default)]
    scale: Option<ScaleInput>,
    #[serde(default)]
    color: Option<ColorInput>,
    #[serde(default)]
    parent: Option<String>,
    #[serde(default)]
    physics: Option<bool>,
    #[serde(default)]
    frame: Option<Frame>,
    #[serde(default)]
    tags: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCommand {
    objects: Vec<RawEntry>,
}

pub fn parse_color(input: &Value) -> Result<Rgba, CreatorError> {
    let parsed: ColorInput =
        serde_json::from_value(input.clone()).map_err(|_| CreatorError::UnknownColor(input.to_string()))?;
    color_from_input(parsed)
}

fn color_from_input(input: ColorInput) -> Result<Rgba, CreatorError> {
    match input {
        ColorInput::Named(name) => Rgba::parse(&name).ok_or(CreatorError::UnknownColor(name)),
        ColorInput::Channels(c) if c.len() == 3 => Ok(Rgba::rgb(c[0], c[1], c[2])),
        ColorInput::Channels(c) if c.len() == 4 => Ok(Rgba::new(c[0], c[1], c[2], c[3])),
        ColorInput::Channels(c) => Err(CreatorError::UnknownColor(format!("{c:?}"))),
    }
}

/// Turns a validated creation command into specs, in listed order.
///
/// `spawn_point` is where unparented objects without a position appear.
pub fn interpret_creation(
    command: &Value,
    registry: &PrefabRegistry,
    spawn_point: Vec3,
) -> Result<Vec<CreationSpec>, CreatorError> {
    let raw: RawCommand =
        serde_json::from_value(command.clone()).map_err(|e| CreatorError::InvalidCommand(e.to_string()))?;
    raw.objects.into_iter().map(|entry| resolve_entry(entry, registry, spawn_point)).collect()
}

fn resolve_entry(entry: RawEntry, registry: &PrefabRegistry, spawn_point: Vec3) -> Result<CreationSpec, CreatorError> {
    let primitive = entry
        .primitive
        .as_deref()
        .map(|p| PrimitiveKind::parse(p).ok_or_else(|| CreatorError::UnknownPrimitive(p.to_string())))
        .transpose()?;
    let source = match (&entry.prefab, primitive) {
        (Some(prefab), fallback) => match registry.get(prefab) {
            Some(p) => Source::Prefab(p.name.clone()),
            None => match fallback {
                Some(kind) => Source::Primitive(kind),
                None => {
                    return Err(CreatorError::UnknownPrefab { object: entry.name, prefab: prefab.clone() })
                }
            },
        },
        (None, Some(kind)) => Source::Primitive(kind),
        (None, None) => match registry.fuzzy_match(&entry.name) {
            Some(p) => Source::Prefab(p.name.clone()),
            None => return Err(CreatorError::MissingSource(entry.name)),
        },
    };
    let prefab = match &source {
        Source::Prefab(name) => registry.get(name),
        Source::Primitive(_) => None,
    };

    let mut frame = entry.frame.unwrap_or_default();
    if frame == Frame::Local && entry.parent.is_none() {
        return Err(CreatorError::LocalFrameWithoutParent(entry.name));
    }
    let position = match (entry.position, &entry.parent) {
        (Some(p), _) => Vec3::from(p),
        (None, Some(_)) => {
            frame = Frame::Local;
            Vec3::zeros()
        }
        (None, None) => spawn_point,
    };
    let scale = match entry.scale {
        Some(ScaleInput::Uniform(s)) => Vec3::repeat(s),
        Some(ScaleInput::Axes(a)) => Vec3::from(a),
        None => prefab.map(|p| Vec3::from(p.default_scale)).unwrap_or_else(|| Vec3::repeat(1.0)),
    };
    if scale.iter().any(|s| !(*s > 0.0)) {
        return Err(CreatorError::InvalidCommand(format!("{}: scale must be positive", entry.name)));
    }
    let color = match entry.color {
        Some(c) => Some(color_from_input(c)?),
        None if prefab.is_some() => None,
        None => Some(Rgba::LIGHT_GRAY),
    };
    let physics = entry.physics.unwrap_or_else(|| prefab.is_some_and(Prefab::physics_by_default));
    let mut tags: BTreeSet<String> = entry.tags.into_iter().collect();
    if let Some(p) = prefab {
        tags.extend(p.tags.iter().cloned());
    }
    Ok(CreationSpec {
        name: entry.name,
        source,
        position,
        orientation: entry.orientation.map(Euler::from).unwrap_or_default(),
        scale,
        color,
        parent: entry.parent,
        physics,
        frame,
        tags,
    })
}

/// Creates every spec or none. Colliding names get a `-N` suffix; later
/// specs in the same batch that name a renamed object as parent follow the
/// rename. Returns every created id (prefab parts included).
pub fn apply(
    specs: &[CreationSpec],
    scene: &mut Scene,
    registry: &PrefabRegistry,
) -> Result<Vec<ObjectId>, CreatorError> {
    let checkpoint = scene.clone();
    match apply_all(specs, scene, registry) {
        Ok(ids) => Ok(ids),
        Err(e) => {
            *scene = checkpoint;
            Err(e)
        }
    }
}

fn apply_all(specs: &[CreationSpec], scene: &mut Scene, registry: &PrefabRegistry) -> Result<Vec<ObjectId>, CreatorError> {
    let mut created = Vec::new();
    let mut renamed: BTreeMap<String, ObjectId> = BTreeMap::new();
    for spec in specs {
        let parent = match &spec.parent {
            Some(name) => Some(renamed.get(name).copied().or_else(|| scene.id_of(name)).ok_or_else(|| {
                CreatorError::UnknownParent { object: spec.name.clone(), parent: name.clone() }
            })?),
            None => None,
        };
        let name = scene.unique_name(&spec.name);
        let transform = Transform { position: spec.position, orientation: spec.orientation, scale: spec.scale };
        let (geometry, prefab) = match &spec.source {
            Source::Primitive(kind) => (Geometry::primitive(*kind), None),
            Source::Prefab(p) => {
                let prefab = registry.get(p).ok_or_else(|| CreatorError::UnknownPrefab {
                    object: spec.name.clone(),
                    prefab: p.clone(),
                })?;
                let (bounds_min, bounds_max) = prefab.bounds();
                (Geometry::Prefab { prefab: prefab.name.clone(), bounds_min, bounds_max }, Some(prefab))
            }
        };
        let mut object = ObjectSpec::new(name);
        object.transform = transform;
        object.color = spec.color.unwrap_or_default();
        object.geometry = Some(geometry);
        object.physics = spec.physics;
        object.tags = spec.tags.clone();
        let id = match (parent, spec.frame) {
            (Some(p), Frame::Local) => scene.add_object(ObjectSpec { parent: Some(p), ..object })?,
            (Some(p), Frame::World) => {
                let id = scene.add_object(object)?;
                scene.set_parent(id, Some(p), true)?;
                id
            }
            (None, _) => scene.add_object(object)?,
        };
        renamed.insert(spec.name.clone(), id);
        created.push(id);
        if let Some(prefab) = prefab {
            created.extend(expand_prefab(prefab, id, spec.color, scene)?);
        }
    }
    Ok(created)
}

fn expand_prefab(prefab: &Prefab, root: ObjectId, tint: Option<Rgba>, scene: &mut Scene) -> Result<Vec<ObjectId>, CreatorError> {
    let root_name = scene.get(root)?.name.clone();
    let mut ids: Vec<ObjectId> = Vec::with_capacity(prefab.parts.len());
    for (i, part) in prefab.parts.iter().enumerate() {
        let parent = part.parent.map(|j| ids[j]).unwrap_or(root);
        let name = scene.unique_name(&format!("{root_name}.part{i}"));
        let mut spec = ObjectSpec::primitive(name, part.primitive).transform(part.transform()).parent(parent);
        spec.color = tint.unwrap_or(part.color);
        spec.tags.insert("prefab_part".into());
        ids.push(scene.add_object(spec)?);
    }
    Ok(ids)
}

/// A horizontal surface that can hold objects. Footprints are axis-aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct Support {
    pub name: String,
    pub object: Option<ObjectId>,
    pub top: f64,
    pub min_x: f64,
    pub max_x: f64,
    pub min_z: f64,
    pub max_z: f64,
}

impl Support {
    pub fn from_proxy(proxy: &RoomProxy) -> Self {
        Support {
            name: proxy.id.clone(),
            object: proxy.object,
            top: proxy.top(),
            min_x: proxy.center.x - proxy.extents.x,
            max_x: proxy.center.x + proxy.extents.x,
            min_z: proxy.center.z - proxy.extents.z,
            max_z: proxy.center.z + proxy.extents.z,
        }
    }

    pub fn contains(&self, x: f64, z: f64) -> bool {
        x >= self.min_x && x <= self.max_x && z >= self.min_z && z <= self.max_z
    }

    fn horizontal_distance(&self, x: f64, z: f64) -> f64 {
        let dx = (self.min_x - x).max(0.0).max(x - self.max_x);
        let dz = (self.min_z - z).max(0.0).max(z - self.max_z);
        (dx * dx + dz * dz).sqrt()
    }
}

/// Room proxies plus visible objects tagged `surface`.
pub fn collect_supports(scene: &Scene, proxies: &[RoomProxy]) -> Vec<Support> {
    let mut out: Vec<Support> = proxies.iter().map(Support::from_proxy).collect();
    for object in scene.objects().filter(|o| o.tags.contains("surface")) {
        if let Ok(Some(b)) = scene.world_bounds(object.id) {
            out.push(Support {
                name: object.name.clone(),
                object: Some(object.id),
                top: b.top(),
                min_x: b.center.x - b.half.x,
                max_x: b.center.x + b.half.x,
                min_z: b.center.z - b.half.z,
                max_z: b.center.z + b.half.z,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjustmentKind {
    /// Dropped or lifted onto the support under its center.
    Snapped,
    /// Pulled inside the nearest footprint, then dropped onto it.
    Clamped,
    /// No support within reach; dropped to the ground plane y = 0.
    Grounded,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Adjustment {
    pub object: ObjectId,
    pub name: String,
    pub kind: AdjustmentKind,
    pub support: Option<String>,
    pub from: Vec3,
    pub to: Vec3,
}

/// Settles physics-enabled, non-placeholder objects among `created`.
pub fn enforce_support(
    created: &[ObjectId],
    scene: &mut Scene,
    supports: &[Support],
) -> Result<Vec<Adjustment>, CreatorError> {
    let mut adjustments = Vec::new();
    for &id in created {
        let object = scene.get(id)?;
        if !object.physics || object.is_placeholder() {
            continue;
        }
        let name = object.name.clone();
        let Some(bounds) = scene.world_bounds(id)? else { continue };
        let (cx, cz) = (bounds.center.x, bounds.center.z);
        let bottom = bounds.bottom();
        let reachable: Vec<&Support> = supports
            .iter()
            .filter(|s| s.object != Some(id))
            .filter(|s| s.top <= bounds.center.y + SUPPORT_TOLERANCE && bottom - s.top <= SUPPORT_SEARCH_DEPTH)
            .collect();

        let under = reachable
            .iter()
            .filter(|s| s.contains(cx, cz))
            .max_by(|a, b| a.top.total_cmp(&b.top));
        let (kind, support, shift) = if let Some(s) = under {
            (AdjustmentKind::Snapped, Some(s.name.clone()), Vec3::new(0.0, s.top - bottom, 0.0))
        } else if let Some(s) = reachable.iter().min_by(|a, b| {
            a.horizontal_distance(cx, cz)
                .total_cmp(&b.horizontal_distance(cx, cz))
                .then(b.top.total_cmp(&a.top))
        }) {
            let clamp = |c: f64, lo: f64, hi: f64, half: f64| {
                if lo + half > hi - half {
                    (lo + hi) / 2.0
                } else {
                    c.clamp(lo + half, hi - half)
                }
            };
            let nx = clamp(cx, s.min_x, s.max_x, bounds.half.x);
            let nz = clamp(cz, s.min_z, s.max_z, bounds.half.z);
            (AdjustmentKind::Clamped, Some(s.name.clone()), Vec3::new(nx - cx, s.top - bottom, nz - cz))
        } else {
            log::warn!("no support below {name}; dropping it to the ground plane");
            (AdjustmentKind::Grounded, None, Vec3::new(0.0, -bottom, 0.0))
        };

        let moved = shift.norm() > SUPPORT_TOLERANCE;
        if moved || kind == AdjustmentKind::Grounded {
            let from = scene.world_position(id)?;
            let to = from + shift;
            if moved {
                scene.set_world_position(id, to)?;
            }
            adjustments.push(Adjustment { object: id, name, kind, support, from, to });
        }
    }
    Ok(adjustments)
}
