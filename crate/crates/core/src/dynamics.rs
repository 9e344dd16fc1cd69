//! Kinematic bicycle model, integrated with forward Euler.

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Pose, RigidTransform, Vec2};

/// Simulation step (10 Hz).
pub const DT: f64 = 0.1;
pub const ACCEL_MIN: f64 = -6.0;
pub const ACCEL_MAX: f64 = 4.0;
pub const STEER_BOUND: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    /// Inertial heading, wrapped to (−π, π].
    pub psi: f64,
    /// Speed, never negative.
    pub v: f64,
}

impl VehicleState {
    pub fn new(x: f64, y: f64, psi: f64, v: f64) -> Self {
        Self { x, y, psi: wrap_angle(psi), v }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn pose(&self) -> Pose {
        Pose::new(self.x, self.y, self.psi)
    }

    pub fn transformed(&self, t: &RigidTransform) -> Self {
        let p = t.apply(self.position());
        Self { x: p.x, y: p.y, psi: t.apply_heading(self.psi), v: self.v }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleGeometry {
    /// Centre of mass to front axle.
    pub l_f: f64,
    /// Centre of mass to rear axle.
    pub l_r: f64,
    pub length: f64,
    pub width: f64,
}

impl Default for VehicleGeometry {
    fn default() -> Self {
        Self { l_f: 1.4, l_r: 1.4, length: 4.6, width: 1.9 }
    }
}

impl VehicleGeometry {
    pub fn wheelbase(&self) -> f64 {
        self.l_f + self.l_r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub enum Signal {
    #[default]
    Off,
    Left,
    Right,
}

impl Signal {
    pub const ALL: [Signal; 3] = [Signal::Off, Signal::Left, Signal::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }

    /// −1 for right, 0 for off, +1 for left (left is +y in a vehicle frame).
    pub fn as_scalar(self) -> f64 {
        match self {
            Signal::Off => 0.0,
            Signal::Left => 1.0,
            Signal::Right => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlInput {
    pub accel: f64,
    /// Front-wheel angle.
    pub steer: f64,
    pub signal: Signal,
}

impl ControlInput {
    pub fn new(accel: f64, steer: f64, signal: Signal) -> Self {
        Self { accel, steer, signal }
    }
}

/// Bounds applied to raw controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlLimits {
    pub accel_min: f64,
    pub accel_max: f64,
    pub steer_bound: f64,
}

impl Default for ControlLimits {
    fn default() -> Self {
        Self { accel_min: ACCEL_MIN, accel_max: ACCEL_MAX, steer_bound: STEER_BOUND }
    }
}

impl ControlLimits {
    pub fn clamp(&self, raw: ControlInput) -> Result<ControlInput> {
        if !raw.accel.is_finite() || !raw.steer.is_finite() {
            return Err(Error::InvalidControl(format!("accel={} steer={}", raw.accel, raw.steer)));
        }
        Ok(ControlInput {
            accel: raw.accel.clamp(self.accel_min, self.accel_max),
            steer: raw.steer.clamp(-self.steer_bound, self.steer_bound),
            signal: raw.signal,
        })
    }
}

/// Clamps with the default limits: accel to [−6, 4] m/s², steer to ±0.5 rad.
pub fn clamp_controls(raw: ControlInput) -> Result<ControlInput> {
    ControlLimits::default().clamp(raw)
}

/// Angle of the centre-of-mass velocity relative to the body axis.
pub fn slip_angle(steer: f64, geom: &VehicleGeometry) -> f64 {
    (geom.l_r * steer.tan() / geom.wheelbase()).atan()
}

/// One forward-Euler step. `control` is expected to be clamped already.
pub fn step(state: &VehicleState, control: &ControlInput, geom: &VehicleGeometry, dt: f64) -> VehicleState {
    let beta = slip_angle(control.steer, geom);
    let course = state.psi + beta;
    VehicleState {
        x: state.x + state.v * course.cos() * dt,
        y: state.y + state.v * course.sin() * dt,
        psi: wrap_angle(state.psi + state.v / geom.l_r * beta.sin() * dt),
        v: (state.v + control.accel * dt).max(0.0),
    }
}
