//! Headless scene orchestration: a scene graph driven by structured JSON
//! commands that a language model produces in two stages.
//!
//! Conventions: right-handed, Y-up, meters. Orientations are yaw, pitch,
//! roll in degrees, applied as `Ry(yaw) * Rx(pitch) * Rz(roll)`. The
//! identity orientation faces +Z.

pub mod animation;
pub mod canonical;
pub mod context;
pub mod creator;
pub mod engine;
pub mod fusion;
#[cfg(feature = "pipeline")]
pub mod llm;
pub mod math;
pub mod scene;
