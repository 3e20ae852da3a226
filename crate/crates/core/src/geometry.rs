//! Planar geometry shared by the simulator, planner, features and rasterizer.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let w = theta.rem_euclid(TAU);
    // rem_euclid can return TAU itself for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    #[serde(rename = "x_m")]
    pub x: f64,
    #[serde(rename = "y_m")]
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn add_scaled(self, dir: (f64, f64), s: f64) -> Point {
        Point::new(self.x + dir.0 * s, self.y + dir.1 * s)
    }

    pub fn lerp(self, other: Point, u: f64) -> Point {
        Point::new(self.x + (other.x - self.x) * u, self.y + (other.y - self.y) * u)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    #[serde(rename = "x_m")]
    pub x: f64,
    #[serde(rename = "y_m")]
    pub y: f64,
    #[serde(rename = "heading_rad")]
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: wrap_angle(heading),
        }
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }

    pub fn direction(&self) -> (f64, f64) {
        (self.heading.cos(), self.heading.sin())
    }

    /// Expresses a world point in this pose's frame as (forward, left).
    pub fn to_local(&self, p: Point) -> (f64, f64) {
        let (c, s) = self.direction();
        let dx = p.x - self.x;
        let dy = p.y - self.y;
        (dx * c + dy * s, -dx * s + dy * c)
    }

    pub fn to_world(&self, forward: f64, left: f64) -> Point {
        let (c, s) = self.direction();
        Point::new(
            self.x + forward * c - left * s,
            self.y + forward * s + left * c,
        )
    }
}

/// A rotation about the origin followed by a translation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform {
    pub rotation: f64,
    pub tx: f64,
    pub ty: f64,
}

impl RigidTransform {
    pub fn new(rotation: f64, tx: f64, ty: f64) -> Self {
        Self { rotation, tx, ty }
    }

    pub fn apply_point(&self, p: Point) -> Point {
        let (s, c) = self.rotation.sin_cos();
        Point::new(c * p.x - s * p.y + self.tx, s * p.x + c * p.y + self.ty)
    }

    pub fn apply_pose(&self, pose: Pose) -> Pose {
        let p = self.apply_point(pose.position());
        Pose::new(p.x, p.y, pose.heading + self.rotation)
    }
}

/// Oriented rectangle used for footprint overlap tests.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrientedBox {
    pub center: Point,
    pub heading: f64,
    pub half_length: f64,
    pub half_width: f64,
}

impl OrientedBox {
    pub fn new(center: Point, heading: f64, length: f64, width: f64) -> Self {
        Self {
            center,
            heading,
            half_length: 0.5 * length,
            half_width: 0.5 * width,
        }
    }

    pub fn corners(&self) -> [Point; 4] {
        let (c, s) = (self.heading.cos(), self.heading.sin());
        let (l, w) = (self.half_length, self.half_width);
        let at = |f: f64, g: f64| Point::new(self.center.x + f * c - g * s, self.center.y + f * s + g * c);
        [at(l, w), at(-l, w), at(-l, -w), at(l, -w)]
    }

    fn axes(&self) -> [(f64, f64); 2] {
        let (c, s) = (self.heading.cos(), self.heading.sin());
        [(c, s), (-s, c)]
    }

    fn project(&self, axis: (f64, f64)) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in self.corners() {
            let v = p.x * axis.0 + p.y * axis.1;
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    /// Separating-axis test; touching boxes count as overlapping.
    pub fn overlaps(&self, other: &OrientedBox) -> bool {
        const EPS: f64 = 1e-9;
        self.axes().into_iter().chain(other.axes()).all(|axis| {
            let (a0, a1) = self.project(axis);
            let (b0, b1) = other.project(axis);
            a1 + EPS >= b0 && b1 + EPS >= a0
        })
    }
}

/// Distance from `p` to the segment `a`–`b`.
pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 <= f64::EPSILON {
        return p.distance(a);
    }
    let u = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    p.distance(a.lerp(b, u))
}

/// Minimum distance from `p` to a polyline; a single vertex degenerates to a point.
pub fn point_polyline_distance(p: Point, line: &[Point]) -> f64 {
    match line {
        [] => f64::INFINITY,
        [only] => p.distance(*only),
        _ => line
            .windows(2)
            .map(|w| point_segment_distance(p, w[0], w[1]))
            .fold(f64::INFINITY, f64::min),
    }
}

/// Linear interpolation of two headings along the shorter arc.
pub fn lerp_angle(a: f64, b: f64, u: f64) -> f64 {
    let mut d = (b - a).rem_euclid(TAU);
    if d > std::f64::consts::PI {
        d -= TAU;
    }
    wrap_angle(a + d * u)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_keeps_range() {
        assert_eq!(wrap_angle(0.0), 0.0);
        assert!((wrap_angle(-0.5) - (TAU - 0.5)).abs() < 1e-12);
        assert!(wrap_angle(-1e-18) < TAU);
        assert!((wrap_angle(TAU + 1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn local_world_roundtrip() {
        let pose = Pose::new(3.0, -2.0, 0.7);
        let p = pose.to_world(5.0, -1.5);
        let (f, l) = pose.to_local(p);
        assert!((f - 5.0).abs() < 1e-12 && (l + 1.5).abs() < 1e-12);
    }

    #[test]
    fn box_overlap_cases() {
        let a = OrientedBox::new(Point::new(0.0, 0.0), 0.0, 4.0, 2.0);
        let touching = OrientedBox::new(Point::new(4.0, 0.0), 0.0, 4.0, 2.0);
        let apart = OrientedBox::new(Point::new(4.1, 0.0), 0.0, 4.0, 2.0);
        let rotated = OrientedBox::new(Point::new(2.5, 1.2), 0.8, 2.0, 1.0);
        assert!(a.overlaps(&touching));
        assert!(!a.overlaps(&apart));
        assert!(a.overlaps(&rotated));
    }

    #[test]
    fn polyline_distance() {
        let line = [Point::new(0.0, 0.0), Point::new(10.0, 0.0), Point::new(10.0, 10.0)];
        assert!((point_polyline_distance(Point::new(5.0, 5.0), &line) - 5.0).abs() < 1e-12);
        assert!((point_polyline_distance(Point::new(-3.0, 4.0), &line) - 5.0).abs() < 1e-12);
    }
}
