//! Animation units, their JSON form, and the action queue that plays them.

mod player;

pub use player::{AnimationEvent, AnimationLibrary, EventKind, DEFAULT_TIMESTEP};

use crate::creator::{parse_color, Frame};
use crate::math::{Euler, Rgba, Vec3};
use crate::scene::{Reference, SceneError};
use serde::Serialize;
use serde_json::{Map, Value};
use std::fmt;
use thiserror::Error;

/// Distance the agent keeps from the item it walks up to during Catch.
pub const CATCH_STANDOFF: f64 = 0.3;

pub const DEFAULT_TRANSLATE_SPEED: f64 = 1.0;
pub const DEFAULT_ANGULAR_SPEED: f64 = 45.0;
pub const DEFAULT_TRANSITION_SECONDS: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnimationError {
    #[error("unknown animation unit {0:?}")]
    UnknownUnit(String),
    #[error("{unit} animation {id:?} is missing {what}")]
    MissingTarget { id: String, unit: Unit, what: &'static str },
    #[error("animation {id:?}: {message}")]
    InvalidTarget { id: String, message: String },
    #[error("malformed animation command: {0}")]
    InvalidCommand(String),
    #[error("animation {0:?} is already queued or running in its group")]
    DuplicateActiveId(String),
    #[error("animation {0:?} was never registered")]
    NotFound(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Unit {
    Translate,
    Rotate,
    Gaze,
    Orbit,
    Scaling,
    Coloring,
    Attach,
    Detach,
    Catch,
    Stop,
    Destroy,
}

impl Unit {
    pub const ALL: [Unit; 11] = [
        Unit::Translate,
        Unit::Rotate,
        Unit::Gaze,
        Unit::Orbit,
        Unit::Scaling,
        Unit::Coloring,
        Unit::Attach,
        Unit::Detach,
        Unit::Catch,
        Unit::Stop,
        Unit::Destroy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Unit::Translate => "Translate",
            Unit::Rotate => "Rotate",
            Unit::Gaze => "Gaze",
            Unit::Orbit => "Orbit",
            Unit::Scaling => "Scaling",
            Unit::Coloring => "Coloring",
            Unit::Attach => "Attach",
            Unit::Detach => "Detach",
            Unit::Catch => "Catch",
            Unit::Stop => "Stop",
            Unit::Destroy => "Destroy",
        }
    }

    pub fn parse(name: &str) -> Result<Self, AnimationError> {
        Unit::ALL
            .into_iter()
            .find(|u| u.as_str().eq_ignore_ascii_case(name))
            .ok_or_else(|| AnimationError::UnknownUnit(name.to_string()))
    }

    /// Units that finish within the tick they run.
    pub fn is_instant(self) -> bool {
        matches!(self, Unit::Attach | Unit::Detach | Unit::Stop | Unit::Destroy)
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Point(Vec3),
    Object(Reference),
    /// Stop `standoff` meters short of the object.
    Approach { object: Reference, standoff: f64 },
    /// Turn until facing the object.
    Face(Reference),
    Orientation(Euler),
    /// Spin about an axis; `None` degrees spins until stopped.
    AxisAngle { axis: Vec3, degrees: Option<f64> },
    Orbit { center: Reference, axis: Vec3, degrees: Option<f64> },
    Color(Rgba),
    Scale(Vec3),
    Animation(String),
    Catch { item: Reference, destination: Box<Target> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnimationSpec {
    pub id: String,
    pub unit: Unit,
    pub subject: Option<Reference>,
    pub target: Option<Target>,
    pub speed: Option<f64>,
    pub duration: Option<f64>,
    pub frame: Frame,
    pub sequence_group: Option<String>,
    /// Id of the Catch this step was expanded from.
    pub parent_id: Option<String>,
}

impl AnimationSpec {
    pub fn new(id: impl Into<String>, unit: Unit, subject: Option<Reference>, target: Option<Target>) -> Self {
        AnimationSpec {
            id: id.into(),
            unit,
            subject,
            target,
            speed: None,
            duration: None,
            frame: Frame::World,
            sequence_group: None,
            parent_id: None,
        }
    }

    pub fn speed(mut self, speed: f64) -> Self {
        self.speed = Some(speed);
        self
    }

    pub fn duration(mut self, seconds: f64) -> Self {
        self.duration = Some(seconds);
        self
    }

    pub fn group(mut self, group: impl Into<String>) -> Self {
        self.sequence_group = Some(group.into());
        self
    }

    pub fn frame(mut self, frame: Frame) -> Self {
        self.frame = frame;
        self
    }

    /// Group the spec runs in; ungrouped specs get a private group.
    pub fn group_key(&self) -> String {
        match &self.sequence_group {
            Some(g) => g.clone(),
            None => format!("@{}", self.id),
        }
    }

    pub fn subject_label(&self) -> String {
        self.subject.as_ref().map(ToString::to_string).unwrap_or_default()
    }
}

fn parse_reference(value: &Value) -> Option<Reference> {
    serde_json::from_value(value.clone()).ok()
}

fn parse_vec3(value: &Value) -> Option<Vec3> {
    let items = value.as_array()?;
    if items.len() != 3 {
        return None;
    }
    let mut out = [0.0; 3];
    for (i, v) in items.iter().enumerate() {
        out[i] = v.as_f64().filter(|f| f.is_finite())?;
    }
    Some(Vec3::from(out))
}

fn parse_axis(value: Option<&Value>) -> Option<Vec3> {
    match value {
        None => Some(Vec3::y()),
        Some(Value::String(s)) => match s.to_ascii_lowercase().as_str() {
            "x" => Some(Vec3::x()),
            "y" => Some(Vec3::y()),
            "z" => Some(Vec3::z()),
            _ => None,
        },
        Some(v) => parse_vec3(v).filter(|a| a.norm() > 1e-12),
    }
}

fn positive(value: Option<&Value>, id: &str, field: &str) -> Result<Option<f64>, AnimationError> {
    match value {
        None | Some(Value::Null) => Ok(None),
        Some(v) => match v.as_f64() {
            Some(f) if f > 0.0 && f.is_finite() => Ok(Some(f)),
            _ => Err(AnimationError::InvalidTarget { id: id.into(), message: format!("{field} must be a positive number") }),
        },
    }
}

/// Parses an animation command (`{"animations": [...]}` or a bare array)
/// into specs, in listed order. Catch entries are expanded.
pub fn parse_animation_request(command: &Value) -> Result<Vec<AnimationSpec>, AnimationError> {
    let entries = match command {
        Value::Array(items) => items,
        Value::Object(map) => map
            .get("animations")
            .and_then(Value::as_array)
            .ok_or_else(|| AnimationError::InvalidCommand("expected an \"animations\" array".into()))?,
        _ => return Err(AnimationError::InvalidCommand("expected an object or array".into())),
    };
    let mut specs = Vec::new();
    for entry in entries {
        let map = entry
            .as_object()
            .ok_or_else(|| AnimationError::InvalidCommand("animation entries must be objects".into()))?;
        let spec = parse_entry(map)?;
        if spec.unit == Unit::Catch {
            specs.extend(expand_catch(&spec)?);
        } else {
            specs.push(spec);
        }
    }
    Ok(specs)
}

fn parse_entry(map: &Map<String, Value>) -> Result<AnimationSpec, AnimationError> {
    let unit_name = map
        .get("unit")
        .and_then(Value::as_str)
        .ok_or_else(|| AnimationError::InvalidCommand("every animation needs a \"unit\"".into()))?;
    let unit = Unit::parse(unit_name)?;
    let id = map
        .get("id")
        .and_then(Value::as_str)
        .filter(|s| !s.is_empty())
        .ok_or_else(|| AnimationError::InvalidCommand("every animation needs a non-empty \"id\"".into()))?
        .to_string();
    let missing = |what: &'static str| AnimationError::MissingTarget { id: id.clone(), unit, what };
    let invalid = |message: String| AnimationError::InvalidTarget { id: id.clone(), message };

    let subject_value = match unit {
        Unit::Catch => map.get("agent").or_else(|| map.get("subject")),
        _ => map.get("subject"),
    };
    let subject = subject_value.and_then(parse_reference);
    if subject.is_none() && unit != Unit::Stop {
        return Err(missing(if unit == Unit::Catch { "agent" } else { "subject" }));
    }
    let target_value = map.get("target");
    let object_target = |key: &str| -> Option<Reference> {
        map.get(key).or(target_value).filter(|v| v.is_string() || v.is_object()).and_then(parse_reference)
    };

    let target = match unit {
        Unit::Translate => {
            let v = target_value.ok_or_else(|| missing("target"))?;
            match parse_vec3(v) {
                Some(p) => Target::Point(p),
                None => Target::Object(parse_reference(v).ok_or_else(|| invalid("target must be a point or object".into()))?),
            }
        }
        Unit::Rotate => {
            if let Some(v) = target_value {
                match parse_vec3(v) {
                    Some(e) => Target::Orientation(Euler::new(e.x, e.y, e.z)),
                    None => Target::Face(parse_reference(v).ok_or_else(|| invalid("target must be an orientation or object".into()))?),
                }
            } else if map.contains_key("axis") || map.contains_key("degrees") {
                let axis = parse_axis(map.get("axis")).ok_or_else(|| invalid("axis must be x, y, z or a non-zero vector".into()))?;
                let degrees = match map.get("degrees") {
                    None | Some(Value::Null) => None,
                    Some(d) => Some(d.as_f64().ok_or_else(|| invalid("degrees must be a number".into()))?),
                };
                Target::AxisAngle { axis, degrees }
            } else {
                return Err(missing("target, axis or degrees"));
            }
        }
        Unit::Gaze => Target::Object(object_target("target").ok_or_else(|| missing("an object target"))?),
        Unit::Orbit => {
            let center = object_target("center").ok_or_else(|| missing("an object to orbit"))?;
            let axis = parse_axis(map.get("axis")).ok_or_else(|| invalid("axis must be x, y, z or a non-zero vector".into()))?;
            let degrees = map.get("degrees").and_then(Value::as_f64);
            Target::Orbit { center, axis, degrees }
        }
        Unit::Scaling => {
            let v = target_value.ok_or_else(|| missing("a target scale"))?;
            let scale = match v.as_f64() {
                Some(s) => Vec3::repeat(s),
                None => parse_vec3(v).ok_or_else(|| invalid("scale must be a number or 3-vector".into()))?,
            };
            if scale.iter().any(|s| !(*s > 0.0)) {
                return Err(invalid("scale must be positive".into()));
            }
            Target::Scale(scale)
        }
        Unit::Coloring => {
            let v = target_value.or(map.get("color")).ok_or_else(|| missing("a target color"))?;
            Target::Color(parse_color(v).map_err(|e| invalid(e.to_string()))?)
        }
        Unit::Attach => Target::Object(object_target("parent").ok_or_else(|| missing("a parent object"))?),
        Unit::Detach | Unit::Destroy => {
            return Ok(AnimationSpec { target: None, ..base_spec(map, id.clone(), unit, subject)? })
        }
        Unit::Stop => {
            let v = map.get("animation").or(target_value).and_then(Value::as_str).ok_or_else(|| missing("an animation id"))?;
            Target::Animation(v.to_string())
        }
        Unit::Catch => {
            let item = map.get("item").and_then(parse_reference).ok_or_else(|| missing("item"))?;
            let dest = map.get("destination").ok_or_else(|| missing("destination"))?;
            let destination = match parse_vec3(dest) {
                Some(p) => Target::Point(p),
                None => Target::Object(parse_reference(dest).ok_or_else(|| invalid("destination must be a point or object".into()))?),
            };
            Target::Catch { item, destination: Box::new(destination) }
        }
    };
    let spec = base_spec(map, id, unit, subject)?;
    Ok(AnimationSpec { target: Some(target), ..spec })
}

fn base_spec(map: &Map<String, Value>, id: String, unit: Unit, subject: Option<Reference>) -> Result<AnimationSpec, AnimationError> {
    let speed = positive(map.get("speed"), &id, "speed")?;
    let duration = positive(map.get("duration"), &id, "duration")?;
    let frame = match map.get("frame").and_then(Value::as_str) {
        None | Some("world") => Frame::World,
        Some("local") => Frame::Local,
        Some(other) => {
            return Err(AnimationError::InvalidTarget { id, message: format!("unknown frame {other:?}") })
        }
    };
    let sequence_group = map.get("sequence_group").and_then(Value::as_str).map(str::to_string);
    Ok(AnimationSpec { id, unit, subject, target: None, speed, duration, frame, sequence_group, parent_id: None })
}

/// Five sequential steps: approach the item, face it, pick it up, carry it
/// to the destination, put it down.
pub fn expand_catch(spec: &AnimationSpec) -> Result<Vec<AnimationSpec>, AnimationError> {
    let missing = |what| AnimationError::MissingTarget { id: spec.id.clone(), unit: Unit::Catch, what };
    let agent = spec.subject.clone().ok_or_else(|| missing("agent"))?;
    let (item, destination) = match &spec.target {
        Some(Target::Catch { item, destination }) => (item.clone(), (**destination).clone()),
        _ => return Err(missing("item and destination")),
    };
    let group = spec.group_key();
    let step = |suffix: &str, unit, subject: &Reference, target| AnimationSpec {
        id: format!("{}/{suffix}", spec.id),
        unit,
        subject: Some(subject.clone()),
        target,
        speed: if unit == Unit::Translate { spec.speed } else { None },
        duration: None,
        frame: Frame::World,
        sequence_group: Some(group.clone()),
        parent_id: Some(spec.id.clone()),
    };
    Ok(vec![
        step("approach", Unit::Translate, &agent, Some(Target::Approach { object: item.clone(), standoff: CATCH_STANDOFF })),
        step("face", Unit::Rotate, &agent, Some(Target::Face(item.clone()))),
        step("grab", Unit::Attach, &item, Some(Target::Object(agent.clone()))),
        step("carry", Unit::Translate, &agent, Some(destination)),
        step("release", Unit::Detach, &item, None),
    ])
}
