use super::{
    AnimationError, AnimationSpec, Target, Unit, DEFAULT_ANGULAR_SPEED, DEFAULT_TRANSITION_SECONDS,
    DEFAULT_TRANSLATE_SPEED,
};
use crate::context::{AnimationRegistry, AnimationStatus, AnimationSummary};
use crate::creator::Frame;
use crate::math::{axis_angle, look_rotation, Quat, Rgba, Vec3};
use crate::scene::{ActiveAnimation, ObjectId, Scene};
use serde::Serialize;
use std::collections::{BTreeMap, VecDeque};

pub const DEFAULT_TIMESTEP: f64 = 0.02;

/// Slack when deciding a timed motion has reached its end.
const END_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Started,
    Progressed,
    Completed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnimationEvent {
    pub tick: u64,
    pub id: String,
    pub unit: Unit,
    pub kind: EventKind,
    pub subject: String,
}

#[derive(Debug, Clone)]
enum Motion {
    Translate { start: Vec3, end: Vec3, total: f64 },
    Spin { start: Quat, axis: Vec3, local: bool, rate: f64, limit: Option<f64>, total: Option<f64> },
    Turn { start: Quat, end: Quat, total: f64 },
    Gaze { target: ObjectId, total: Option<f64> },
    Orbit { center: ObjectId, offset: Vec3, axis: Vec3, rate: f64, limit: Option<f64>, total: Option<f64> },
    Scale { start: Vec3, end: Vec3, total: f64 },
    Color { start: Rgba, end: Rgba, total: f64 },
    Instant,
}

#[derive(Debug, Clone)]
struct Instance {
    spec: AnimationSpec,
    subject: Option<ObjectId>,
    steps: u64,
    progress: f64,
    motion: Motion,
}

#[derive(Debug, Clone)]
struct Group {
    key: String,
    queue: VecDeque<AnimationSpec>,
    active: Option<Instance>,
}

enum Step {
    Running,
    Done,
    Failed(String),
}

/// Action queue plus the fixed-step player. Groups run in parallel; specs
/// within a group run one after another.
#[derive(Debug, Clone)]
pub struct AnimationLibrary {
    timestep: f64,
    tick: u64,
    groups: Vec<Group>,
    previous_parents: BTreeMap<ObjectId, Option<ObjectId>>,
    destroyed: Vec<ObjectId>,
    warnings: Vec<String>,
}

impl Default for AnimationLibrary {
    fn default() -> Self {
        Self::new(DEFAULT_TIMESTEP)
    }
}

fn timed_progress(elapsed: f64, total: f64) -> (f64, bool) {
    if elapsed >= total - END_EPSILON {
        (1.0, true)
    } else {
        ((elapsed / total).clamp(0.0, 1.0), false)
    }
}

impl AnimationLibrary {
    pub fn new(timestep: f64) -> Self {
        AnimationLibrary {
            timestep,
            tick: 0,
            groups: Vec::new(),
            previous_parents: BTreeMap::new(),
            destroyed: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn timestep(&self) -> f64 {
        self.timestep
    }

    pub fn current_tick(&self) -> u64 {
        self.tick
    }

    /// Objects removed by Destroy units since the last call.
    pub fn take_destroyed(&mut self) -> Vec<ObjectId> {
        std::mem::take(&mut self.destroyed)
    }

    pub fn take_warnings(&mut self) -> Vec<String> {
        std::mem::take(&mut self.warnings)
    }

    fn warn(&mut self, message: String) {
        log::warn!("{message}");
        self.warnings.push(message);
    }

    pub fn is_idle(&self) -> bool {
        self.groups.iter().all(|g| g.active.is_none() && g.queue.is_empty())
    }

    pub fn active_ids(&self) -> Vec<String> {
        self.groups.iter().filter_map(|g| g.active.as_ref().map(|i| i.spec.id.clone())).collect()
    }

    pub fn is_active(&self, id: &str) -> bool {
        self.groups.iter().any(|g| g.active.as_ref().is_some_and(|i| i.spec.id == id))
    }

    pub fn active(&self) -> Vec<ActiveAnimation> {
        self.groups
            .iter()
            .filter_map(|g| g.active.as_ref())
            .map(|i| ActiveAnimation {
                id: i.spec.id.clone(),
                unit: i.spec.unit.as_str().to_string(),
                subject: i.spec.subject_label(),
                progress: i.progress,
            })
            .collect()
    }

    /// Enqueues specs by group and registers their ids. All-or-nothing: a
    /// duplicate id leaves the queue untouched.
    pub fn schedule(
        &mut self,
        specs: Vec<AnimationSpec>,
        registry: &mut AnimationRegistry,
    ) -> Result<Vec<String>, AnimationError> {
        let mut seen: Vec<(String, String)> = Vec::new();
        for spec in &specs {
            let key = spec.group_key();
            let clash = self.groups.iter().filter(|g| g.key == key).any(|g| {
                g.active.as_ref().is_some_and(|i| i.spec.id == spec.id) || g.queue.iter().any(|q| q.id == spec.id)
            });
            if clash || seen.contains(&(key.clone(), spec.id.clone())) {
                return Err(AnimationError::DuplicateActiveId(spec.id.clone()));
            }
            seen.push((key, spec.id.clone()));
        }
        let mut ids = Vec::new();
        for spec in specs {
            let key = spec.group_key();
            if let Some(parent) = &spec.parent_id {
                if registry.lookup(parent).is_err() || !ids.contains(parent) {
                    let summary = AnimationSummary {
                        unit: Unit::Catch.as_str().into(),
                        subject: spec.subject_label(),
                        group: key.clone(),
                    };
                    registry.register(parent, summary);
                    ids.push(parent.clone());
                }
            }
            registry.register(
                &spec.id,
                AnimationSummary { unit: spec.unit.as_str().into(), subject: spec.subject_label(), group: key.clone() },
            );
            ids.push(spec.id.clone());
            match self.groups.iter_mut().find(|g| g.key == key) {
                Some(group) => group.queue.push_back(spec),
                None => self.groups.push(Group { key, queue: VecDeque::from([spec]), active: None }),
            }
        }
        Ok(ids)
    }

    /// Stops a queued or running animation, leaving its subject where it is.
    /// Stopping an id that already finished is a logged no-op.
    pub fn stop(&mut self, id: &str, registry: &mut AnimationRegistry) -> Result<(), AnimationError> {
        self.stop_in_place(id, registry)?;
        self.groups.retain(|g| g.active.is_some() || !g.queue.is_empty());
        Ok(())
    }

    // Leaves emptied groups in place so tick indices stay valid.
    fn stop_in_place(&mut self, id: &str, registry: &mut AnimationRegistry) -> Result<(), AnimationError> {
        let record = registry.lookup(id).map_err(|_| AnimationError::NotFound(id.to_string()))?;
        if record.status.is_finished() {
            self.warn(format!("animation {id:?} already finished; stop ignored"));
            return Ok(());
        }
        let is_catch = record.summary.unit == Unit::Catch.as_str();
        for group in &mut self.groups {
            if group.active.as_ref().is_some_and(|i| i.spec.id == id || (is_catch && i.spec.parent_id.as_deref() == Some(id))) {
                let instance = group.active.take().expect("checked");
                registry.set_status(&instance.spec.id, AnimationStatus::Stopped);
            }
            group.queue.retain(|spec| {
                let hit = spec.id == id || (is_catch && spec.parent_id.as_deref() == Some(id));
                if hit {
                    registry.set_status(&spec.id, AnimationStatus::Stopped);
                }
                !hit
            });
        }
        registry.set_status(id, AnimationStatus::Stopped);
        Ok(())
    }

    /// Drops every instance that moves or depends on `object`.
    pub fn forget_object(&mut self, object: ObjectId, registry: &mut AnimationRegistry) -> Vec<String> {
        let mut removed = Vec::new();
        for group in &mut self.groups {
            let depends = group.active.as_ref().is_some_and(|i| {
                i.subject == Some(object)
                    || matches!(i.motion, Motion::Gaze { target, .. } if target == object)
                    || matches!(i.motion, Motion::Orbit { center, .. } if center == object)
            });
            if depends {
                let instance = group.active.take().expect("checked");
                registry.set_status(&instance.spec.id, AnimationStatus::Stopped);
                removed.push(instance.spec.id);
            }
        }
        self.previous_parents.remove(&object);
        removed
    }

    /// Advances one fixed step. Idle groups first activate their next spec;
    /// then every running instance moves. A finished instance hands over to
    /// the next spec of its group within the same tick.
    pub fn tick(&mut self, scene: &mut Scene, registry: &mut AnimationRegistry) -> Vec<AnimationEvent> {
        self.tick += 1;
        let mut events = Vec::new();
        for index in 0..self.groups.len() {
            if self.groups[index].active.is_none() {
                self.activate_next(index, scene, registry, &mut events);
            }
        }
        for index in 0..self.groups.len() {
            let Some(mut instance) = self.groups[index].active.take() else { continue };
            let step = self.advance(&mut instance, scene, registry);
            let event = |kind| AnimationEvent {
                tick: self.tick,
                id: instance.spec.id.clone(),
                unit: instance.spec.unit,
                kind,
                subject: instance.spec.subject_label(),
            };
            match step {
                Step::Running => {
                    events.push(event(EventKind::Progressed));
                    registry.set_progress(&instance.spec.id, instance.progress);
                    self.groups[index].active = Some(instance);
                }
                Step::Done => {
                    events.push(event(EventKind::Completed));
                    registry.set_progress(&instance.spec.id, 1.0);
                    registry.set_status(&instance.spec.id, AnimationStatus::Completed);
                    self.finish_parent(&instance.spec, index, registry);
                    self.activate_next(index, scene, registry, &mut events);
                }
                Step::Failed(reason) => {
                    events.push(event(EventKind::Skipped));
                    registry.set_status(&instance.spec.id, AnimationStatus::Skipped);
                    self.warn(format!("animation {:?} skipped: {reason}", instance.spec.id));
                    self.activate_next(index, scene, registry, &mut events);
                }
            }
            // a Destroy earlier in this tick may have removed what this group depends on
            for object in self.destroyed.clone() {
                if !scene.contains(object) {
                    for id in self.forget_object(object, registry) {
                        self.warn(format!("animation {id:?} removed with its object"));
                    }
                }
            }
        }
        self.groups.retain(|g| g.active.is_some() || !g.queue.is_empty());
        events
    }

    fn finish_parent(&self, spec: &AnimationSpec, index: usize, registry: &mut AnimationRegistry) {
        if let Some(parent) = &spec.parent_id {
            let more = self.groups[index].queue.iter().any(|s| s.parent_id.as_ref() == Some(parent));
            if !more {
                registry.set_status(parent, AnimationStatus::Completed);
                registry.set_progress(parent, 1.0);
            }
        }
    }

    fn activate_next(
        &mut self,
        index: usize,
        scene: &mut Scene,
        registry: &mut AnimationRegistry,
        events: &mut Vec<AnimationEvent>,
    ) {
        while let Some(spec) = self.groups[index].queue.pop_front() {
            let event = |kind| AnimationEvent {
                tick: self.tick,
                id: spec.id.clone(),
                unit: spec.unit,
                kind,
                subject: spec.subject_label(),
            };
            match self.bind(&spec, scene) {
                Ok(instance) => {
                    events.push(event(EventKind::Started));
                    registry.set_status(&spec.id, AnimationStatus::Active);
                    if let Some(parent) = &spec.parent_id {
                        registry.set_status(parent, AnimationStatus::Active);
                    }
                    self.groups[index].active = Some(instance);
                    return;
                }
                Err(reason) => {
                    events.push(event(EventKind::Skipped));
                    registry.set_status(&spec.id, AnimationStatus::Skipped);
                    self.warn(format!("animation {:?} skipped: {reason}", spec.id));
                }
            }
        }
    }

    /// Late binding: resolves references and captures start state.
    fn bind(&self, spec: &AnimationSpec, scene: &Scene) -> Result<Instance, String> {
        let subject = match &spec.subject {
            Some(reference) => Some(scene.resolve_reference(reference).map_err(|e| e.to_string())?),
            None => None,
        };
        let need_subject = || subject.ok_or_else(|| format!("{} needs a subject", spec.unit));
        let resolve = |r| scene.resolve_reference(r).map_err(|e| e.to_string());
        let err = |e: crate::scene::SceneError| e.to_string();
        let angular = spec.speed.unwrap_or(DEFAULT_ANGULAR_SPEED);

        let motion = match (spec.unit, &spec.target) {
            (Unit::Translate, Some(target)) => {
                let s = need_subject()?;
                let start = scene.world_position(s).map_err(err)?;
                let end = match target {
                    Target::Point(p) if spec.frame == Frame::Local => {
                        start + scene.world_rotation(s).map_err(err)? * p
                    }
                    Target::Point(p) => *p,
                    Target::Object(r) => scene.world_position(resolve(r)?).map_err(err)?,
                    Target::Approach { object, standoff } => {
                        let item = scene.world_position(resolve(object)?).map_err(err)?;
                        let offset = item - start;
                        let distance = offset.norm();
                        if distance <= *standoff {
                            start
                        } else {
                            item - offset / distance * *standoff
                        }
                    }
                    other => return Err(format!("Translate cannot target {other:?}")),
                };
                let distance = (end - start).norm();
                let total = spec.duration.unwrap_or(distance / spec.speed.unwrap_or(DEFAULT_TRANSLATE_SPEED));
                Motion::Translate { start, end, total }
            }
            (Unit::Rotate, Some(Target::AxisAngle { axis, degrees })) => {
                let s = need_subject()?;
                let start = scene.world_rotation(s).map_err(err)?;
                let sign = degrees.map_or(1.0, f64::signum);
                let limit = degrees.map(f64::abs);
                let rate = match (spec.duration, limit) {
                    (Some(d), Some(l)) => l / d,
                    _ => angular,
                };
                let total = if limit.is_none() { spec.duration } else { None };
                Motion::Spin {
                    start,
                    axis: axis.normalize() * sign,
                    local: spec.frame == Frame::Local,
                    rate,
                    limit,
                    total,
                }
            }
            (Unit::Rotate, Some(Target::Orientation(euler))) => {
                let s = need_subject()?;
                let start = scene.world_rotation(s).map_err(err)?;
                let end = match spec.frame {
                    Frame::World => euler.to_quat(),
                    Frame::Local => start * euler.to_quat(),
                };
                Motion::Turn { start, end, total: turn_time(&start, &end, spec.duration, angular) }
            }
            (Unit::Rotate, Some(Target::Face(r))) => {
                let s = need_subject()?;
                let start = scene.world_rotation(s).map_err(err)?;
                let from = scene.world_position(s).map_err(err)?;
                let to = scene.world_position(resolve(r)?).map_err(err)?;
                let end = look_rotation(&(to - from)).unwrap_or(start);
                Motion::Turn { start, end, total: turn_time(&start, &end, spec.duration, angular) }
            }
            (Unit::Gaze, Some(Target::Object(r))) => {
                need_subject()?;
                Motion::Gaze { target: resolve(r)?, total: spec.duration }
            }
            (Unit::Orbit, Some(Target::Orbit { center, axis, degrees })) => {
                let s = need_subject()?;
                let center = resolve(center)?;
                if center == s {
                    return Err("an object cannot orbit itself".into());
                }
                let offset = scene.world_position(s).map_err(err)? - scene.world_position(center).map_err(err)?;
                let sign = degrees.map_or(1.0, f64::signum);
                let limit = degrees.map(f64::abs);
                let rate = match (spec.duration, limit) {
                    (Some(d), Some(l)) => l / d,
                    _ => angular,
                };
                let total = if limit.is_none() { spec.duration } else { None };
                Motion::Orbit { center, offset, axis: axis.normalize() * sign, rate, limit, total }
            }
            (Unit::Scaling, Some(Target::Scale(end))) => {
                let s = need_subject()?;
                let start = scene.get(s).map_err(err)?.transform.scale;
                let total = match (spec.duration, spec.speed) {
                    (Some(d), _) => d,
                    (None, Some(v)) => (end - start).abs().max() / v,
                    (None, None) => DEFAULT_TRANSITION_SECONDS,
                };
                Motion::Scale { start, end: *end, total }
            }
            (Unit::Coloring, Some(Target::Color(end))) => {
                let s = need_subject()?;
                let start = scene.get(s).map_err(err)?.color;
                let total = match (spec.duration, spec.speed) {
                    (Some(d), _) => d,
                    (None, Some(v)) => start.max_channel_delta(end) / v,
                    (None, None) => DEFAULT_TRANSITION_SECONDS,
                };
                Motion::Color { start, end: *end, total }
            }
            (Unit::Attach, Some(Target::Object(r))) => {
                need_subject()?;
                resolve(r)?;
                Motion::Instant
            }
            (Unit::Detach | Unit::Destroy, _) => {
                need_subject()?;
                Motion::Instant
            }
            (Unit::Stop, Some(Target::Animation(_))) => Motion::Instant,
            (unit, target) => return Err(format!("{unit} cannot use target {target:?}")),
        };
        Ok(Instance { spec: spec.clone(), subject, steps: 0, progress: 0.0, motion })
    }

    fn advance(&mut self, instance: &mut Instance, scene: &mut Scene, registry: &mut AnimationRegistry) -> Step {
        if let Some(s) = instance.subject {
            if !scene.contains(s) {
                return Step::Failed("subject no longer exists".into());
            }
        }
        instance.steps += 1;
        let elapsed = instance.steps as f64 * self.timestep;
        let subject = instance.subject;
        let result = match &instance.motion {
            Motion::Translate { start, end, total } => {
                let (p, done) = timed_progress(elapsed, *total);
                let position = if done { *end } else { start + (end - start) * p };
                instance.progress = p;
                scene.set_world_position(subject.expect("bound"), position).map(|_| done)
            }
            Motion::Spin { start, axis, local, rate, limit, total } => {
                let mut angle = elapsed * rate;
                let mut done = false;
                if let Some(l) = limit {
                    if angle >= l - END_EPSILON {
                        angle = *l;
                        done = true;
                    }
                    instance.progress = if *l > 0.0 { angle / l } else { 1.0 };
                }
                if let Some(t) = total {
                    let (p, finished) = timed_progress(elapsed, *t);
                    instance.progress = p;
                    if finished {
                        angle = t * rate;
                        done = true;
                    }
                }
                let turn = axis_angle(axis, angle);
                let rotation = if *local { start * turn } else { turn * start };
                scene.set_world_rotation(subject.expect("bound"), rotation).map(|_| done)
            }
            Motion::Turn { start, end, total } => {
                let (p, done) = timed_progress(elapsed, *total);
                let rotation = if done { *end } else { start.slerp(end, p) };
                instance.progress = p;
                scene.set_world_rotation(subject.expect("bound"), rotation).map(|_| done)
            }
            Motion::Gaze { target, total } => {
                let s = subject.expect("bound");
                if !scene.contains(*target) {
                    return Step::Failed("gaze target no longer exists".into());
                }
                let done = match total {
                    Some(t) => {
                        let (p, done) = timed_progress(elapsed, *t);
                        instance.progress = p;
                        done
                    }
                    None => false,
                };
                let aim = scene
                    .world_position(*target)
                    .and_then(|to| Ok(to - scene.world_position(s)?));
                match aim {
                    Ok(direction) => match look_rotation(&direction) {
                        Some(rotation) => scene.set_world_rotation(s, rotation).map(|_| done),
                        None => Ok(done),
                    },
                    Err(e) => Err(e),
                }
            }
            Motion::Orbit { center, offset, axis, rate, limit, total } => {
                let s = subject.expect("bound");
                if !scene.contains(*center) {
                    return Step::Failed("orbit center no longer exists".into());
                }
                let mut angle = elapsed * rate;
                let mut done = false;
                if let Some(l) = limit {
                    if angle >= l - END_EPSILON {
                        angle = *l;
                        done = true;
                    }
                    instance.progress = if *l > 0.0 { angle / l } else { 1.0 };
                }
                if let Some(t) = total {
                    let (p, finished) = timed_progress(elapsed, *t);
                    instance.progress = p;
                    if finished {
                        angle = t * rate;
                        done = true;
                    }
                }
                scene
                    .world_position(*center)
                    .and_then(|c| scene.set_world_position(s, c + axis_angle(axis, angle) * offset))
                    .map(|_| done)
            }
            Motion::Scale { start, end, total } => {
                let (p, done) = timed_progress(elapsed, *total);
                let scale = if done { *end } else { start + (end - start) * p };
                instance.progress = p;
                scene.get_mut(subject.expect("bound")).map(|o| {
                    o.transform.scale = scale;
                    done
                })
            }
            Motion::Color { start, end, total } => {
                let (p, done) = timed_progress(elapsed, *total);
                let color = if done { *end } else { start.lerp(end, p) };
                instance.progress = p;
                scene.get_mut(subject.expect("bound")).map(|o| {
                    o.color = color;
                    done
                })
            }
            Motion::Instant => {
                instance.progress = 1.0;
                return self.run_instant(instance, scene, registry);
            }
        };
        match result {
            Ok(true) => {
                instance.progress = 1.0;
                Step::Done
            }
            Ok(false) => Step::Running,
            Err(e) => Step::Failed(e.to_string()),
        }
    }

    fn run_instant(&mut self, instance: &Instance, scene: &mut Scene, registry: &mut AnimationRegistry) -> Step {
        let spec = &instance.spec;
        let outcome: Result<(), String> = match (spec.unit, &spec.target, instance.subject) {
            (Unit::Attach, Some(Target::Object(r)), Some(child)) => (|| {
                let parent = scene.resolve_reference(r).map_err(|e| e.to_string())?;
                let before = scene.get(child).map_err(|e| e.to_string())?.parent;
                scene.set_parent(child, Some(parent), true).map_err(|e| e.to_string())?;
                self.previous_parents.insert(child, before);
                Ok(())
            })(),
            (Unit::Detach, _, Some(child)) => {
                let restore = self
                    .previous_parents
                    .remove(&child)
                    .flatten()
                    .filter(|p| scene.contains(*p));
                scene.set_parent(child, restore, true).map_err(|e| e.to_string())
            }
            (Unit::Destroy, _, Some(object)) => match scene.destroy_object(object) {
                Ok(_) => {
                    self.destroyed.push(object);
                    Ok(())
                }
                Err(e) => Err(e.to_string()),
            },
            (Unit::Stop, Some(Target::Animation(id)), _) => {
                let id = id.clone();
                self.stop_in_place(&id, registry).map_err(|e| e.to_string())
            }
            _ => Err(format!("{} is not an instantaneous unit", spec.unit)),
        };
        match outcome {
            Ok(()) => Step::Done,
            Err(reason) => Step::Failed(reason),
        }
    }
}

fn turn_time(start: &Quat, end: &Quat, duration: Option<f64>, rate: f64) -> f64 {
    duration.unwrap_or_else(|| start.angle_to(end).to_degrees() / rate)
}
