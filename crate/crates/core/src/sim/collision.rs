//! Oriented bounding boxes and the separating-axis overlap test.

use crate::dynamics::{VehicleGeometry, VehicleState};
use crate::geometry::Vec2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox {
    pub center: Vec2,
    pub heading: f64,
    pub half_length: f64,
    pub half_width: f64,
}

impl OrientedBox {
    pub fn new(center: Vec2, heading: f64, length: f64, width: f64) -> Self {
        Self { center, heading, half_length: 0.5 * length, half_width: 0.5 * width }
    }

    pub fn of_vehicle(state: &VehicleState, geom: &VehicleGeometry) -> Self {
        Self::new(state.position(), state.psi, geom.length, geom.width)
    }

    /// Grows every side by `margin`.
    pub fn inflate(&self, margin: f64) -> Self {
        Self { half_length: self.half_length + margin, half_width: self.half_width + margin, ..*self }
    }

    pub fn axes(&self) -> (Vec2, Vec2) {
        let fwd = Vec2::from_angle(self.heading);
        (fwd, fwd.perp())
    }

    /// Corners in counter-clockwise order starting front-left.
    pub fn corners(&self) -> [Vec2; 4] {
        let (f, l) = self.axes();
        let f = f * self.half_length;
        let l = l * self.half_width;
        let c = self.center;
        [c + f + l, c - f + l, c - f - l, c + f - l]
    }

    /// Closed containment test.
    pub fn contains(&self, p: Vec2) -> bool {
        let (f, l) = self.axes();
        let d = p - self.center;
        d.dot(f).abs() <= self.half_length && d.dot(l).abs() <= self.half_width
    }

    /// Half-extent of the box projected on a unit axis.
    fn radius_on(&self, axis: Vec2) -> f64 {
        let (f, l) = self.axes();
        self.half_length * f.dot(axis).abs() + self.half_width * l.dot(axis).abs()
    }

    /// Separating-axis test over the four face normals. Touching boxes intersect.
    pub fn intersects(&self, other: &OrientedBox) -> bool {
        let d = other.center - self.center;
        let reach = self.half_length.hypot(self.half_width) + other.half_length.hypot(other.half_width);
        if d.norm_sq() > reach * reach {
            return false;
        }
        let (a0, a1) = self.axes();
        let (b0, b1) = other.axes();
        for axis in [a0, a1, b0, b1] {
            if d.dot(axis).abs() > self.radius_on(axis) + other.radius_on(axis) {
                return false;
            }
        }
        true
    }
}

/// All unordered intersecting pairs `(i, j)` with `i < j` among `boxes`.
pub fn intersecting_pairs(boxes: &[OrientedBox]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..boxes.len() {
        for j in i + 1..boxes.len() {
            if boxes[i].intersects(&boxes[j]) {
                out.push((i, j));
            }
        }
    }
    out
}
