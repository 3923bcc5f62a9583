//! Categorized scene, user and resource context.
//!
//! `retrieve` serves exactly the categories an initial-stage response asks
//! for, with only the requested properties on each entry. Every section is
//! plain text, one entity per line: `name | prop=value | ...`.

use crate::creator::PrefabRegistry;
use crate::fusion::{RoomProxy, UserContext};
use crate::math::{clean_zero, fmt_vec3};
use crate::scene::{ObjectState, SceneSnapshot};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use thiserror::Error;

pub const DEFAULT_HISTORY_CAPACITY: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContextError {
    #[error("unknown context category {0:?}")]
    UnknownCategory(String),
    #[error("property {property:?} is not available for category {kind}")]
    UnknownProperty { kind: String, property: String },
    #[error("a context request must name at least one category")]
    EmptyRequest,
    #[error("animation {0:?} was never registered")]
    NotFound(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoryKind {
    Resources,
    VirtualObjects,
    RealWorld,
    Animations,
    UserContext,
    History,
}

impl CategoryKind {
    pub const ALL: [CategoryKind; 6] = [
        CategoryKind::Resources,
        CategoryKind::VirtualObjects,
        CategoryKind::RealWorld,
        CategoryKind::Animations,
        CategoryKind::UserContext,
        CategoryKind::History,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CategoryKind::Resources => "resources",
            CategoryKind::VirtualObjects => "virtual_objects",
            CategoryKind::RealWorld => "real_world",
            CategoryKind::Animations => "animations",
            CategoryKind::UserContext => "user_context",
            CategoryKind::History => "history",
        }
    }

    pub fn parse(name: &str) -> Result<Self, ContextError> {
        CategoryKind::ALL
            .into_iter()
            .find(|k| k.as_str() == name)
            .ok_or_else(|| ContextError::UnknownCategory(name.to_string()))
    }

    /// Properties an entry of this category can carry.
    pub fn allowed_properties(self) -> &'static [Property] {
        use Property::*;
        match self {
            CategoryKind::Resources => &[Size, Tags],
            CategoryKind::VirtualObjects => &[Position, Orientation, Scale, Size, Color, Tags, Parent, Id],
            CategoryKind::RealWorld => &[Position, Orientation, Size, Tags, Id],
            CategoryKind::Animations => &[Id],
            CategoryKind::UserContext => &[Position, Orientation],
            CategoryKind::History => &[],
        }
    }
}

impl fmt::Display for CategoryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Property {
    Position,
    Orientation,
    Scale,
    Size,
    Color,
    Tags,
    Parent,
    Id,
}

impl Property {
    pub const ALL: [Property; 8] = [
        Property::Position,
        Property::Orientation,
        Property::Scale,
        Property::Size,
        Property::Color,
        Property::Tags,
        Property::Parent,
        Property::Id,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Property::Position => "position",
            Property::Orientation => "orientation",
            Property::Scale => "scale",
            Property::Size => "size",
            Property::Color => "color",
            Property::Tags => "tags",
            Property::Parent => "parent",
            Property::Id => "id",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Property::ALL.into_iter().find(|p| p.as_str() == name)
    }
}

/// One requested category with the properties wanted on each entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ContextCategory {
    pub kind: CategoryKind,
    pub properties: BTreeSet<Property>,
}

impl ContextCategory {
    pub fn new(kind: CategoryKind, properties: &[Property]) -> Result<Self, ContextError> {
        let allowed = kind.allowed_properties();
        for p in properties {
            if !allowed.contains(p) {
                return Err(ContextError::UnknownProperty {
                    kind: kind.as_str().into(),
                    property: p.as_str().into(),
                });
            }
        }
        Ok(ContextCategory { kind, properties: properties.iter().copied().collect() })
    }

    /// Category carrying every property it allows.
    pub fn everything(kind: CategoryKind) -> Self {
        ContextCategory { kind, properties: kind.allowed_properties().iter().copied().collect() }
    }

    pub fn parse(kind: &str, properties: &[String]) -> Result<Self, ContextError> {
        let kind = CategoryKind::parse(kind)?;
        let props = properties
            .iter()
            .map(|p| {
                Property::parse(p).ok_or_else(|| ContextError::UnknownProperty {
                    kind: kind.as_str().into(),
                    property: p.clone(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        ContextCategory::new(kind, &props)
    }
}

/// Fixed-capacity queue of recent user messages; oldest evicted first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistoryQueue {
    capacity: usize,
    entries: VecDeque<String>,
}

impl Default for HistoryQueue {
    fn default() -> Self {
        HistoryQueue::with_capacity(DEFAULT_HISTORY_CAPACITY)
    }
}

impl HistoryQueue {
    pub fn with_capacity(capacity: usize) -> Self {
        assert!(capacity > 0, "history capacity must be positive");
        HistoryQueue { capacity, entries: VecDeque::with_capacity(capacity) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn record_message(&mut self, text: impl Into<String>) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(text.into());
    }

    /// Oldest first.
    pub fn messages(&self) -> Vec<String> {
        self.entries.iter().cloned().collect()
    }
}

/// Deterministic token estimate: one token per four bytes, rounded up.
pub fn estimate_tokens(text: &str) -> usize {
    text.len().div_ceil(4)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnimationStatus {
    Pending,
    Active,
    Completed,
    Stopped,
    Skipped,
}

impl AnimationStatus {
    pub fn is_finished(self) -> bool {
        matches!(self, AnimationStatus::Completed | AnimationStatus::Stopped | AnimationStatus::Skipped)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnimationSummary {
    pub unit: String,
    pub subject: String,
    pub group: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnimationRecord {
    pub summary: AnimationSummary,
    pub status: AnimationStatus,
    pub progress: f64,
}

/// Index of animation ids; finished animations stay listed.
#[derive(Debug, Clone, Default)]
pub struct AnimationRegistry {
    entries: BTreeMap<String, AnimationRecord>,
}

impl AnimationRegistry {
    /// Registers `id`, overwriting any earlier entry. Returns `true` (and logs
    /// a warning) when an entry was replaced.
    pub fn register(&mut self, id: &str, summary: AnimationSummary) -> bool {
        let replaced = self
            .entries
            .insert(
                id.to_string(),
                AnimationRecord { summary, status: AnimationStatus::Pending, progress: 0.0 },
            )
            .is_some();
        if replaced {
            log::warn!("animation id {id:?} registered twice; keeping the newer descriptor");
        }
        replaced
    }

    pub fn lookup(&self, id: &str) -> Result<&AnimationRecord, ContextError> {
        self.entries.get(id).ok_or_else(|| ContextError::NotFound(id.to_string()))
    }

    pub fn set_status(&mut self, id: &str, status: AnimationStatus) {
        if let Some(record) = self.entries.get_mut(id) {
            record.status = status;
        }
    }

    pub fn set_progress(&mut self, id: &str, progress: f64) {
        if let Some(record) = self.entries.get_mut(id) {
            record.progress = progress;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &AnimationRecord)> {
        self.entries.iter()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }
}

/// Everything `retrieve` can draw from.
#[derive(Debug, Clone, Copy)]
pub struct ContextSources<'a> {
    pub snapshot: &'a SceneSnapshot,
    pub proxies: &'a [RoomProxy],
    pub user: &'a UserContext,
    pub prefabs: &'a PrefabRegistry,
    pub history: &'a HistoryQueue,
}

/// Category-filtered context, ready to splice into a refined prompt.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContextPayload {
    pub sections: BTreeMap<CategoryKind, String>,
    pub estimated_tokens: usize,
}

impl ContextPayload {
    pub fn from_sections(sections: BTreeMap<CategoryKind, String>) -> Self {
        let mut payload = ContextPayload { sections, estimated_tokens: 0 };
        payload.estimated_tokens = estimate_tokens(&payload.render());
        payload
    }

    pub fn kinds(&self) -> BTreeSet<CategoryKind> {
        self.sections.keys().copied().collect()
    }

    /// Sections in category order, each under a `[kind]` header.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (kind, text) in &self.sections {
            out.push('[');
            out.push_str(kind.as_str());
            out.push_str("]\n");
            out.push_str(text);
            if !text.is_empty() && !text.ends_with('\n') {
                out.push('\n');
            }
        }
        out
    }
}

#[derive(Debug, Clone, Default)]
pub struct ContextLibrary {
    pub animations: AnimationRegistry,
}

impl ContextLibrary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_animation(&mut self, id: &str, summary: AnimationSummary) -> bool {
        self.animations.register(id, summary)
    }

    pub fn lookup_animation(&self, id: &str) -> Result<&AnimationRecord, ContextError> {
        self.animations.lookup(id)
    }

    /// Serves exactly the requested categories. Repeated kinds merge their
    /// property sets.
    pub fn retrieve(
        &self,
        request: &[ContextCategory],
        sources: &ContextSources<'_>,
    ) -> Result<ContextPayload, ContextError> {
        if request.is_empty() {
            return Err(ContextError::EmptyRequest);
        }
        let mut merged: BTreeMap<CategoryKind, BTreeSet<Property>> = BTreeMap::new();
        for category in request {
            let allowed = category.kind.allowed_properties();
            if let Some(bad) = category.properties.iter().find(|p| !allowed.contains(p)) {
                return Err(ContextError::UnknownProperty {
                    kind: category.kind.as_str().into(),
                    property: bad.as_str().into(),
                });
            }
            merged.entry(category.kind).or_default().extend(category.properties.iter().copied());
        }
        let sections = merged
            .into_iter()
            .map(|(kind, props)| (kind, self.render_section(kind, &props, sources)))
            .collect();
        Ok(ContextPayload::from_sections(sections))
    }

    /// Every category with every property; the baseline a selective request
    /// is measured against.
    pub fn full_dump(&self, sources: &ContextSources<'_>) -> ContextPayload {
        let request: Vec<ContextCategory> =
            CategoryKind::ALL.into_iter().map(ContextCategory::everything).collect();
        self.retrieve(&request, sources).expect("full request is valid")
    }

    fn render_section(
        &self,
        kind: CategoryKind,
        props: &BTreeSet<Property>,
        sources: &ContextSources<'_>,
    ) -> String {
        let lines: Vec<String> = match kind {
            CategoryKind::Resources => sources
                .prefabs
                .iter()
                .map(|prefab| {
                    let mut line = Line::new(&prefab.name);
                    if props.contains(&Property::Size) {
                        line.field("size", fmt_vec3(&prefab.size()));
                    }
                    if props.contains(&Property::Tags) {
                        line.field("tags", fmt_tags(prefab.tags.iter()));
                    }
                    line.finish()
                })
                .collect(),
            CategoryKind::VirtualObjects => sources
                .snapshot
                .objects
                .iter()
                .filter(|o| o.visible)
                .map(|o| virtual_object_line(o, props, sources.snapshot))
                .collect(),
            CategoryKind::RealWorld => sources
                .proxies
                .iter()
                .map(|proxy| {
                    // generic names carry no identity, so tags always ride along
                    let mut line = Line::new(&proxy.generic_name);
                    line.field("tags", fmt_tags(proxy.tags.iter()));
                    if props.contains(&Property::Position) {
                        line.field("center", fmt_vec3(&proxy.center));
                    }
                    if props.contains(&Property::Orientation) {
                        line.field("yaw", format!("{:.3}", clean_zero(proxy.yaw_deg)));
                    }
                    if props.contains(&Property::Size) {
                        line.field("extents", fmt_vec3(&proxy.extents));
                        line.field("top", format!("{:.3}", clean_zero(proxy.top())));
                    }
                    if props.contains(&Property::Id) {
                        line.field("id", proxy.id.clone());
                    }
                    line.finish()
                })
                .collect(),
            CategoryKind::Animations => self
                .animations
                .iter()
                .map(|(id, record)| {
                    let mut line = Line::new(id);
                    line.field("unit", record.summary.unit.clone());
                    line.field("subject", record.summary.subject.clone());
                    line.field("status", status_str(record.status).into());
                    line.finish()
                })
                .collect(),
            CategoryKind::UserContext => user_lines(sources.user, props),
            CategoryKind::History => sources
                .history
                .messages()
                .iter()
                .enumerate()
                .map(|(i, m)| format!("{} | {}", i + 1, m))
                .collect(),
        };
        let mut text = lines.join("\n");
        if !text.is_empty() {
            text.push('\n');
        }
        text
    }
}

fn status_str(status: AnimationStatus) -> &'static str {
    match status {
        AnimationStatus::Pending => "pending",
        AnimationStatus::Active => "active",
        AnimationStatus::Completed => "completed",
        AnimationStatus::Stopped => "stopped",
        AnimationStatus::Skipped => "skipped",
    }
}

struct Line(String);

impl Line {
    fn new(name: &str) -> Self {
        Line(name.to_string())
    }

    fn field(&mut self, key: &str, value: String) {
        self.0.push_str(" | ");
        self.0.push_str(key);
        self.0.push('=');
        self.0.push_str(&value);
    }

    fn finish(self) -> String {
        self.0
    }
}

fn fmt_tags<'a>(tags: impl Iterator<Item = &'a String>) -> String {
    format!("[{}]", tags.map(String::as_str).collect::<Vec<_>>().join(","))
}

fn virtual_object_line(o: &ObjectState, props: &BTreeSet<Property>, snapshot: &SceneSnapshot) -> String {
    let mut line = Line::new(&o.name);
    for prop in props {
        match prop {
            Property::Position => line.field("position", fmt_vec3(&o.world.position)),
            Property::Orientation => {
                let e = o.world.orientation;
                line.field(
                    "orientation",
                    format!("({:.3},{:.3},{:.3})", clean_zero(e.yaw), clean_zero(e.pitch), clean_zero(e.roll)),
                )
            }
            Property::Scale => line.field("scale", fmt_vec3(&o.world.scale)),
            Property::Size => {
                let size = o
                    .geometry
                    .as_ref()
                    .map(|g| {
                        let (min, max) = g.local_bounds();
                        (max - min).component_mul(&o.world.scale.abs())
                    })
                    .unwrap_or_else(crate::math::Vec3::zeros);
                line.field("size", fmt_vec3(&size))
            }
            Property::Color => line.field("color", o.color.to_string()),
            Property::Tags => line.field("tags", fmt_tags(o.tags.iter())),
            Property::Parent => {
                let parent = o
                    .parent
                    .and_then(|p| snapshot.objects.iter().find(|x| x.id == p))
                    .map(|p| p.name.clone())
                    .unwrap_or_else(|| "none".into());
                line.field("parent", parent)
            }
            Property::Id => line.field("id", o.id.0.to_string()),
        }
    }
    line.finish()
}

fn user_lines(user: &UserContext, props: &BTreeSet<Property>) -> Vec<String> {
    let mut lines = Vec::new();
    let mut pose_line = |name: &str, position: &crate::math::Vec3, orientation: &crate::math::Euler| {
        let mut line = Line::new(name);
        if props.contains(&Property::Position) {
            line.field("position", fmt_vec3(position));
        }
        if props.contains(&Property::Orientation) {
            line.field(
                "orientation",
                format!(
                    "({:.3},{:.3},{:.3})",
                    clean_zero(orientation.yaw),
                    clean_zero(orientation.pitch),
                    clean_zero(orientation.roll)
                ),
            );
        }
        lines.push(line.finish());
    };
    pose_line("head", &user.head.position, &user.head.orientation);
    for pose in user.hands.values() {
        let hand = pose.hand.as_str();
        pose_line(&format!("{hand}_palm"), &pose.palm_position, &pose.palm_orientation);
    }
    if props.contains(&Property::Position) {
        for pose in user.hands.values() {
            let hand = pose.hand.as_str();
            for (bone, position) in &pose.bones {
                lines.push(format!("{hand}.{bone} | position={}", fmt_vec3(position)));
            }
        }
    }
    lines
}
