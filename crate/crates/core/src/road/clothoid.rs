use crate::geometry::Vec2;

// 5-point Gauss-Legendre nodes and weights on [-1, 1].
const GL_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189,
    0.478_628_670_499_366,
    0.568_888_888_888_889,
    0.478_628_670_499_366,
    0.236_926_885_056_189,
];

/// Parameters of an Euler spiral: curvature `k0 + k_rate * s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clothoid {
    pub start: Vec2,
    pub heading: f64,
    pub k0: f64,
    pub k_rate: f64,
    pub length: f64,
}

impl Clothoid {
    pub fn heading_at(&self, s: f64) -> f64 {
        self.heading + self.k0 * s + 0.5 * self.k_rate * s * s
    }

    pub fn curvature_at(&self, s: f64) -> f64 {
        self.k0 + self.k_rate * s
    }

    /// Displacement between arc lengths `a` and `b`, integrated with
    /// Gauss-Legendre quadrature on the interval.
    fn displacement(&self, a: f64, b: f64) -> Vec2 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = Vec2::ZERO;
        for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
            let th = self.heading_at(mid + half * x);
            acc = acc + Vec2::from_angle(th) * w;
        }
        acc * half
    }

    /// Samples the spiral every `step` meters or less, endpoints included.
    pub fn tessellate(&self, step: f64) -> Vec<Vec2> {
        assert!(self.length > 0.0 && step > 0.0, "clothoid length and step must be positive");
        let n = (self.length / step).ceil().max(1.0) as usize;
        let h = self.length / n as f64;
        let mut pts = Vec::with_capacity(n + 1);
        let mut p = self.start;
        pts.push(p);
        for i in 0..n {
            // Each sub-interval is split once more to keep quadrature error
            // far below the sampling step.
            let a = i as f64 * h;
            let m = a + 0.5 * h;
            let b = if i + 1 == n { self.length } else { a + h };
            p = p + self.displacement(a, m) + self.displacement(m, b);
            pts.push(p);
        }
        pts
    }
}

/// Free-function form used by the map loader.
pub fn tessellate_clothoid(
    start: (f64, f64, f64),
    k0: f64,
    k_rate: f64,
    length: f64,
    step: f64,
) -> Vec<Vec2> {
    Clothoid { start: Vec2::new(start.0, start.1), heading: start.2, k0, k_rate, length }
        .tessellate(step)
}
