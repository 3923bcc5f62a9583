//! Vector, rotation and color primitives shared by every interpreter.
//!
//! Frame convention: right-handed, Y-up, meters. An identity orientation
//! faces +Z. Euler triples are `(yaw, pitch, roll)` in degrees and compose
//! as `R = Ry(yaw) * Rx(pitch) * Rz(roll)`.

use nalgebra::{Matrix3, Matrix4, Rotation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use std::fmt;

pub type Vec3 = Vector3<f64>;
pub type Quat = UnitQuaternion<f64>;

/// Local forward axis of every object.
pub fn forward() -> Vec3 {
    Vec3::new(0.0, 0.0, 1.0)
}

/// Wraps an angle in degrees into `[-180, 180)`.
pub fn normalize_degrees(angle: f64) -> f64 {
    let wrapped = (angle + 180.0).rem_euclid(360.0) - 180.0;
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if wrapped >= 180.0 {
        wrapped - 360.0
    } else {
        wrapped
    }
}

/// Yaw-pitch-roll orientation in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Euler {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl From<[f64; 3]> for Euler {
    fn from(v: [f64; 3]) -> Self {
        Euler::new(v[0], v[1], v[2])
    }
}

impl From<Euler> for [f64; 3] {
    fn from(e: Euler) -> Self {
        [e.yaw, e.pitch, e.roll]
    }
}

impl Euler {
    /// Builds a normalized triple.
    pub fn new(yaw: f64, pitch: f64, roll: f64) -> Self {
        Euler {
            yaw: normalize_degrees(yaw),
            pitch: normalize_degrees(pitch),
            roll: normalize_degrees(roll),
        }
    }

    pub fn yaw(deg: f64) -> Self {
        Euler::new(deg, 0.0, 0.0)
    }

    pub fn to_quat(self) -> Quat {
        let y = UnitQuaternion::from_axis_angle(&Vec3::y_axis(), self.yaw.to_radians());
        let p = UnitQuaternion::from_axis_angle(&Vec3::x_axis(), self.pitch.to_radians());
        let r = UnitQuaternion::from_axis_angle(&Vec3::z_axis(), self.roll.to_radians());
        y * p * r
    }

    /// Inverse of [`Euler::to_quat`]. At gimbal lock (pitch = ±90°) roll is
    /// folded into yaw.
    pub fn from_quat(q: &Quat) -> Self {
        let m = q.to_rotation_matrix();
        let m = m.matrix();
        let sp = (-m[(1, 2)]).clamp(-1.0, 1.0);
        let pitch = sp.asin();
        let (yaw, roll) = if pitch.cos().abs() > 1e-9 {
            (m[(0, 2)].atan2(m[(2, 2)]), m[(1, 0)].atan2(m[(1, 1)]))
        } else {
            ((-m[(2, 0)]).atan2(m[(0, 0)]), 0.0)
        };
        Euler::new(yaw.to_degrees(), pitch.to_degrees(), roll.to_degrees())
    }
}

/// Orientation whose forward axis points along `direction`, with no roll.
/// Returns `None` for a zero-length direction.
pub fn look_rotation(direction: &Vec3) -> Option<Quat> {
    let horizontal = (direction.x * direction.x + direction.z * direction.z).sqrt();
    if horizontal < 1e-12 && direction.y.abs() < 1e-12 {
        return None;
    }
    let yaw = direction.x.atan2(direction.z);
    let pitch = -direction.y.atan2(horizontal);
    Some(
        UnitQuaternion::from_axis_angle(&Vec3::y_axis(), yaw)
            * UnitQuaternion::from_axis_angle(&Vec3::x_axis(), pitch),
    )
}

/// Rotation of `degrees` about `axis`. A zero axis yields identity.
pub fn axis_angle(axis: &Vec3, degrees: f64) -> Quat {
    match Unit::try_new(*axis, 1e-12) {
        Some(axis) => UnitQuaternion::from_axis_angle(&axis, degrees.to_radians()),
        None => Quat::identity(),
    }
}

/// Affine matrix `T * R * S`.
pub fn trs_matrix(position: &Vec3, rotation: &Quat, scale: &Vec3) -> Matrix4<f64> {
    let r: Matrix3<f64> = *Rotation3::from(*rotation).matrix();
    let rs = r * Matrix3::from_diagonal(scale);
    let mut m = rs.to_homogeneous();
    m[(0, 3)] = position.x;
    m[(1, 3)] = position.y;
    m[(2, 3)] = position.z;
    m
}

pub fn transform_point(m: &Matrix4<f64>, p: &Vec3) -> Vec3 {
    let h = m * p.push(1.0);
    Vec3::new(h.x, h.y, h.z)
}

/// RGBA color with channels in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Rgba {
    pub r: f64,
    pub g: f64,
    pub b: f64,
    pub a: f64,
}

impl From<[f64; 4]> for Rgba {
    fn from(c: [f64; 4]) -> Self {
        Rgba::new(c[0], c[1], c[2], c[3])
    }
}

impl From<Rgba> for [f64; 4] {
    fn from(c: Rgba) -> Self {
        [c.r, c.g, c.b, c.a]
    }
}

impl Default for Rgba {
    fn default() -> Self {
        Rgba::LIGHT_GRAY
    }
}

impl fmt::Display for Rgba {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.3},{:.3},{:.3},{:.3})", self.r, self.g, self.b, self.a)
    }
}

impl Rgba {
    pub const LIGHT_GRAY: Rgba = Rgba { r: 0.8, g: 0.8, b: 0.8, a: 1.0 };

    pub fn new(r: f64, g: f64, b: f64, a: f64) -> Self {
        Rgba {
            r: r.clamp(0.0, 1.0),
            g: g.clamp(0.0, 1.0),
            b: b.clamp(0.0, 1.0),
            a: a.clamp(0.0, 1.0),
        }
    }

    pub fn rgb(r: f64, g: f64, b: f64) -> Self {
        Rgba::new(r, g, b, 1.0)
    }

    pub fn lerp(&self, other: &Rgba, t: f64) -> Rgba {
        let mix = |a: f64, b: f64| a + (b - a) * t;
        Rgba::new(
            mix(self.r, other.r),
            mix(self.g, other.g),
            mix(self.b, other.b),
            mix(self.a, other.a),
        )
    }

    /// Largest per-channel distance to `other`.
    pub fn max_channel_delta(&self, other: &Rgba) -> f64 {
        [
            (self.r - other.r).abs(),
            (self.g - other.g).abs(),
            (self.b - other.b).abs(),
            (self.a - other.a).abs(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    /// Named colors and `#rrggbb` / `#rrggbbaa` hex strings.
    pub fn parse(text: &str) -> Option<Rgba> {
        let t = text.trim().to_ascii_lowercase();
        if let Some(hex) = t.strip_prefix('#') {
            return parse_hex(hex);
        }
        let c = match t.as_str() {
            "red" => Rgba::rgb(1.0, 0.0, 0.0),
            "green" => Rgba::rgb(0.0, 1.0, 0.0),
            "blue" => Rgba::rgb(0.0, 0.0, 1.0),
            "yellow" => Rgba::rgb(1.0, 0.92, 0.016),
            "orange" => Rgba::rgb(1.0, 0.5, 0.0),
            "purple" => Rgba::rgb(0.5, 0.0, 0.5),
            "magenta" => Rgba::rgb(1.0, 0.0, 1.0),
            "cyan" => Rgba::rgb(0.0, 1.0, 1.0),
            "white" => Rgba::rgb(1.0, 1.0, 1.0),
            "black" => Rgba::rgb(0.0, 0.0, 0.0),
            "gray" | "grey" => Rgba::rgb(0.5, 0.5, 0.5),
            "light_gray" | "lightgray" | "light gray" => Rgba::LIGHT_GRAY,
            "brown" => Rgba::rgb(0.55, 0.27, 0.07),
            "pink" => Rgba::rgb(1.0, 0.75, 0.8),
            "clear" | "transparent" => Rgba::new(0.0, 0.0, 0.0, 0.0),
            _ => return None,
        };
        Some(c)
    }
}

fn parse_hex(hex: &str) -> Option<Rgba> {
    if !(hex.len() == 6 || hex.len() == 8) || !hex.is_ascii() {
        return None;
    }
    let channel = |i: usize| u8::from_str_radix(&hex[i..i + 2], 16).ok().map(|v| v as f64 / 255.0);
    let a = if hex.len() == 8 { channel(6)? } else { 1.0 };
    Some(Rgba::new(channel(0)?, channel(2)?, channel(4)?, a))
}

/// Fixed three-decimal vector rendering used in context text.
pub fn fmt_vec3(v: &Vec3) -> String {
    format!("({:.3},{:.3},{:.3})", clean_zero(v.x), clean_zero(v.y), clean_zero(v.z))
}

/// Maps `-0.0` (and values that print as it) to `0.0`.
pub fn clean_zero(x: f64) -> f64 {
    if x.abs() < 5e-7 {
        0.0
    } else {
        x
    }
}
