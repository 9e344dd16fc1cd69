//! Planar geometry shared by the map, the simulator and the rasterizer.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self::new(c, s)
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn distance(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    /// Counter-clockwise rotation by `theta`.
    pub fn rotate(self, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn perp(self) -> Self {
        Self::new(-self.y, self.x)
    }

    pub fn lerp(self, o: Vec2, t: f64) -> Self {
        self + (o - self) * t
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Wraps an angle into (−π, π].
pub fn wrap_angle(theta: f64) -> f64 {
    let mut a = theta % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Position plus heading.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose {
    pub position: Vec2,
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self { position: Vec2::new(x, y), heading }
    }

    /// Expresses a world point in this pose's frame (+x forward, +y left).
    pub fn to_local(&self, p: Vec2) -> Vec2 {
        (p - self.position).rotate(-self.heading)
    }

    pub fn to_world(&self, p: Vec2) -> Vec2 {
        p.rotate(self.heading) + self.position
    }
}

/// Rotation about the origin followed by a translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: f64,
    pub translation: Vec2,
}

impl RigidTransform {
    pub fn new(rotation: f64, translation: Vec2) -> Self {
        Self { rotation, translation }
    }

    pub fn apply(&self, p: Vec2) -> Vec2 {
        p.rotate(self.rotation) + self.translation
    }

    pub fn apply_heading(&self, heading: f64) -> f64 {
        wrap_angle(heading + self.rotation)
    }
}

/// Closest-point query result on a polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Arc length of the foot point from the polyline start.
    pub s: f64,
    /// Signed lateral offset, positive to the left of travel.
    pub d: f64,
    /// Index of the segment holding the foot point.
    pub segment: usize,
}

/// Projects `p` onto the polyline `pts` whose cumulative arc lengths are `cum`.
///
/// Ties between equidistant segments go to the earliest one.
pub fn project_onto_polyline(pts: &[Vec2], cum: &[f64], p: Vec2) -> Projection {
    debug_assert!(pts.len() >= 2 && pts.len() == cum.len());
    let mut best = Projection { s: 0.0, d: f64::INFINITY, segment: 0 };
    let mut best_dist_sq = f64::INFINITY;
    for i in 0..pts.len() - 1 {
        let a = pts[i];
        let ab = pts[i + 1] - a;
        let len_sq = ab.norm_sq();
        let ap = p - a;
        let t = (ap.dot(ab) / len_sq).clamp(0.0, 1.0);
        let foot = a + ab * t;
        let dist_sq = (p - foot).norm_sq();
        if dist_sq < best_dist_sq {
            best_dist_sq = dist_sq;
            let seg_len = cum[i + 1] - cum[i];
            let side = ab.cross(ap);
            let dist = dist_sq.sqrt();
            best = Projection {
                s: cum[i] + t * seg_len,
                d: if side < 0.0 { -dist } else { dist },
                segment: i,
            };
        }
    }
    best
}

/// Cumulative arc length for each vertex of a polyline.
pub fn cumulative_lengths(pts: &[Vec2]) -> Vec<f64> {
    let mut out = Vec::with_capacity(pts.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in pts.windows(2) {
        acc += w[0].distance(w[1]);
        out.push(acc);
    }
    out
}

/// Point and tangent heading at arc length `s`, clamped to the polyline ends.
pub fn sample_polyline(pts: &[Vec2], cum: &[f64], s: f64) -> (Vec2, f64) {
    let total = *cum.last().unwrap();
    let s = s.clamp(0.0, total);
    // First vertex with cum >= s.
    let idx = cum.partition_point(|&c| c < s).clamp(1, pts.len() - 1);
    let a = pts[idx - 1];
    let b = pts[idx];
    let seg = cum[idx] - cum[idx - 1];
    let t = if seg > 0.0 { (s - cum[idx - 1]) / seg } else { 0.0 };
    let dir = b - a;
    (a.lerp(b, t), dir.y.atan2(dir.x))
}
