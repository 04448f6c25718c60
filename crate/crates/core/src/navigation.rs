//! Shortest-path distance to the goal around the known walls.
//!
//! A visibility graph over points set around each free wall end. Sight
//! lines must keep a clearance from walls, so routes swing wide of corners.
//! With no walls in the way the distance is plain Euclidean.

use crate::geometry::{point_segment_distance, Vec2, WallSegment};
use crate::world::StaticMap;

#[derive(Debug, Clone, PartialEq)]
pub struct GoalField {
    goal: Vec2,
    walls: Vec<WallSegment>,
    nodes: Vec<Vec2>,
    /// Shortest distance from each node to the goal.
    cost: Vec<f64>,
    clearance: f64,
}

fn cross(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Distance between two closed segments.
pub fn segment_distance(p1: Vec2, p2: Vec2, q1: Vec2, q2: Vec2) -> f64 {
    if segments_intersect(p1, p2, q1, q2) {
        return 0.0;
    }
    point_segment_distance(p1, q1, q2)
        .min(point_segment_distance(p2, q1, q2))
        .min(point_segment_distance(q1, p1, p2))
        .min(point_segment_distance(q2, p1, p2))
}

/// Closed-segment intersection test.
pub fn segments_intersect(p1: Vec2, p2: Vec2, q1: Vec2, q2: Vec2) -> bool {
    let d1 = cross(q2 - q1, p1 - q1);
    let d2 = cross(q2 - q1, p2 - q1);
    let d3 = cross(p2 - p1, q1 - p1);
    let d4 = cross(p2 - p1, q2 - p1);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    let on = |a: Vec2, b: Vec2, c: Vec2, d: f64| {
        d == 0.0 && c.x >= a.x.min(b.x) && c.x <= a.x.max(b.x) && c.y >= a.y.min(b.y) && c.y <= a.y.max(b.y)
    };
    on(q1, q2, p1, d1) || on(q1, q2, p2, d2) || on(p1, p2, q1, d3) || on(p1, p2, q2, d4)
}

impl GoalField {
    /// Detour points sit `margin` past each free wall end, straight on and
    /// diagonally to either side. Sight lines keep `clearance` from walls.
    pub fn new(map: &StaticMap, goal: Vec2, margin: f64, clearance: f64) -> Self {
        let walls = map.walls.clone();
        let mut nodes = Vec::new();
        for (i, w) in walls.iter().enumerate() {
            for (end, other) in [(w.a, w.b), (w.b, w.a)] {
                // ends joined to another wall are corners, not detour points
                let joined = walls
                    .iter()
                    .enumerate()
                    .any(|(j, v)| j != i && (v.a.distance(end) < 1e-9 || v.b.distance(end) < 1e-9));
                let len = end.distance(other);
                if joined || len == 0.0 {
                    continue;
                }
                let t = (end - other) * (1.0 / len);
                let n = Vec2::new(-t.y, t.x);
                for p in [end + t * margin, end + (t + n) * margin, end + (t - n) * margin] {
                    let free = walls.iter().all(|w| point_segment_distance(p, w.a, w.b) >= clearance);
                    if free && map.bounds.contains(p) {
                        nodes.push(p);
                    }
                }
            }
        }
        let mut field = Self {
            goal,
            walls,
            cost: vec![f64::INFINITY; nodes.len()],
            nodes,
            clearance,
        };
        // Bellman-Ford over the small dense graph
        for i in 0..field.nodes.len() {
            if field.visible(field.nodes[i], goal) {
                field.cost[i] = field.nodes[i].distance(goal);
            }
        }
        for _ in 0..field.nodes.len() {
            let mut changed = false;
            for i in 0..field.nodes.len() {
                for j in 0..field.nodes.len() {
                    if i == j || !field.cost[j].is_finite() {
                        continue;
                    }
                    let c = field.nodes[i].distance(field.nodes[j]) + field.cost[j];
                    if c < field.cost[i] && field.visible(field.nodes[i], field.nodes[j]) {
                        field.cost[i] = c;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        field
    }

    pub fn goal(&self) -> Vec2 {
        self.goal
    }

    /// Whether the segment keeps the required clearance from every wall. An
    /// endpoint already closer than that only needs the segment not to get
    /// closer still.
    pub fn visible(&self, a: Vec2, b: Vec2) -> bool {
        self.walls.iter().all(|w| {
            let need = self
                .clearance
                .min(point_segment_distance(a, w.a, w.b))
                .min(point_segment_distance(b, w.a, w.b));
            segment_distance(a, b, w.a, w.b) >= need - 1e-12 && !segments_intersect(a, b, w.a, w.b)
        })
    }

    /// Distance to the goal and the first point to head for.
    pub fn route(&self, p: Vec2) -> (f64, Vec2) {
        if self.visible(p, self.goal) {
            return (p.distance(self.goal), self.goal);
        }
        let mut best = (f64::INFINITY, self.goal);
        for (n, &c) in self.nodes.iter().zip(&self.cost) {
            if c.is_finite() {
                let d = p.distance(*n) + c;
                if d < best.0 && self.visible(p, *n) {
                    best = (d, *n);
                }
            }
        }
        if best.0.is_finite() {
            best
        } else {
            (p.distance(self.goal), self.goal)
        }
    }

    pub fn distance(&self, p: Vec2) -> f64 {
        self.route(p).0
    }
}
