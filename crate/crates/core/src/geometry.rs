//! Differential-drive kinematics and clearance geometry.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// Below this turn rate the straight-line update is used instead of the arc.
pub const OMEGA_EPS: f64 = 1e-6;

/// Clearance reported when a scene has no obstacles and no walls.
pub const DEFAULT_EMPTY_CLEARANCE: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Rotates counter-clockwise by `angle` radians.
    pub fn rotate(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, rhs: Vec2) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Wraps an angle into (−π, π].
pub fn normalize_angle(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

/// Planar robot pose. Heading is kept in (−π, π].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: normalize_angle(heading),
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

/// Velocity limits of the differential-drive base.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    pub v_max: f64,
    pub omega_max: f64,
}

/// Linear and angular velocity command.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VelocityCommand {
    pub v: f64,
    pub omega: f64,
}

impl VelocityCommand {
    pub const STOP: VelocityCommand = VelocityCommand { v: 0.0, omega: 0.0 };

    pub const fn new(v: f64, omega: f64) -> Self {
        Self { v, omega }
    }

    pub fn clamped(self, limits: &Limits) -> Self {
        Self {
            v: self.v.clamp(-limits.v_max, limits.v_max),
            omega: self.omega.clamp(-limits.omega_max, limits.omega_max),
        }
    }

    pub fn within(&self, limits: &Limits) -> bool {
        self.v.abs() <= limits.v_max && self.omega.abs() <= limits.omega_max
    }
}

/// Circular footprint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disc {
    pub center: Vec2,
    pub radius: f64,
}

impl Disc {
    pub fn new(center: Vec2, radius: f64) -> Self {
        Self { center, radius }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WallSegment {
    pub a: Vec2,
    pub b: Vec2,
}

impl WallSegment {
    pub fn new(a: Vec2, b: Vec2) -> Self {
        Self { a, b }
    }

    pub fn distance_to(&self, p: Vec2) -> f64 {
        point_segment_distance(p, self.a, self.b)
    }
}

pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    if len_sq == 0.0 {
        return p.distance(a);
    }
    let t = ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0);
    p.distance(a + ab * t)
}

/// Integrates a constant twist over `dt` exactly.
///
/// Uses the chord form `2 sin(ω dt / 2) / ω` of the arc so the update stays
/// well conditioned as ω approaches the straight-line threshold.
pub fn step_unicycle(pose: Pose, cmd: VelocityCommand, dt: f64) -> Pose {
    let VelocityCommand { v, omega } = cmd;
    if omega.abs() < OMEGA_EPS {
        let (s, c) = pose.heading.sin_cos();
        return Pose {
            x: pose.x + v * dt * c,
            y: pose.y + v * dt * s,
            heading: pose.heading,
        };
    }
    let half = 0.5 * omega * dt;
    let chord = 2.0 * v * half.sin() / omega;
    let (s, c) = (pose.heading + half).sin_cos();
    Pose {
        x: pose.x + chord * c,
        y: pose.y + chord * s,
        heading: normalize_angle(pose.heading + omega * dt),
    }
}

/// Signed clearance of `robot` against discs and walls, capped at `empty`.
///
/// Negative means overlap. With nothing in the scene the result is `empty`.
pub fn clearance(robot: &Disc, obstacles: &[Disc], walls: &[WallSegment], empty: f64) -> f64 {
    let to_obstacles = obstacles
        .iter()
        .map(|o| robot.center.distance(o.center) - robot.radius - o.radius);
    let to_walls = walls
        .iter()
        .map(|w| w.distance_to(robot.center) - robot.radius);
    to_obstacles.chain(to_walls).fold(empty, f64::min)
}

pub fn goal_distance(pose: &Pose, goal: Vec2) -> f64 {
    pose.position().distance(goal)
}
