//! Rule-based sparring drivers.
//!
//! Longitudinal control is the intelligent driver model acting as adaptive
//! cruise control; lateral control is pure pursuit on the route; lane changes
//! are gated by lead/lag gap acceptance and announced with the turn signal.

use rand::Rng;

use crate::dynamics::{ControlInput, Signal, VehicleGeometry};
use crate::geometry::{Pose, Vec2};
use crate::road::LaneId;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdmParams {
    /// Desired speed, m/s.
    pub v0: f64,
    /// Desired time headway, s.
    pub time_headway: f64,
    pub a_max: f64,
    /// Comfortable deceleration (positive), m/s².
    pub b_comf: f64,
    /// Standstill gap, m.
    pub s0: f64,
    pub delta_exp: f64,
    pub gap_lead_min: f64,
    pub gap_lag_min: f64,
    /// How long the signal is shown before a lane change may start, s.
    pub signal_lead_time: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self {
            v0: 15.0,
            time_headway: 1.5,
            a_max: 1.5,
            b_comf: 2.0,
            s0: 2.0,
            delta_exp: 4.0,
            gap_lead_min: 6.0,
            gap_lag_min: 8.0,
            signal_lead_time: 1.0,
        }
    }
}

/// Ranges used when drawing a fresh driver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdmSampling {
    pub base: IdmParams,
    pub v0_min: f64,
    pub v0_max: f64,
    /// Relative jitter applied to every other field.
    pub jitter: f64,
}

impl Default for IdmSampling {
    fn default() -> Self {
        Self { base: IdmParams::default(), v0_min: 10.0, v0_max: 20.0, jitter: 0.2 }
    }
}

/// Draws a driver: desired speed uniform in the configured range, other
/// fields scaled by a uniform factor in `[1 - jitter, 1 + jitter]`.
pub fn sample_idm_params<R: Rng + ?Sized>(rng: &mut R, cfg: &IdmSampling) -> IdmParams {
    let b = cfg.base;
    let mut j = |x: f64| x * rng.random_range(1.0 - cfg.jitter..=1.0 + cfg.jitter);
    let time_headway = j(b.time_headway);
    let a_max = j(b.a_max);
    let b_comf = j(b.b_comf).min(6.0);
    let s0 = j(b.s0);
    let delta_exp = j(b.delta_exp);
    let gap_lead_min = j(b.gap_lead_min);
    let gap_lag_min = j(b.gap_lag_min);
    let signal_lead_time = j(b.signal_lead_time);
    IdmParams {
        v0: rng.random_range(cfg.v0_min..=cfg.v0_max),
        time_headway,
        a_max,
        b_comf,
        s0,
        delta_exp,
        gap_lead_min,
        gap_lag_min,
        signal_lead_time,
    }
}

/// Intelligent-driver acceleration.
///
/// `dv` is the closing speed (own speed minus leader speed); `gap` is the
/// bumper-to-bumper distance, `f64::INFINITY` on a free road. The dynamic
/// part of the desired gap is floored at zero so the result is monotone in
/// `dv`.
pub fn idm_accel(v: f64, dv: f64, gap: f64, p: &IdmParams) -> f64 {
    let free = 1.0 - (v / p.v0).powf(p.delta_exp);
    if gap.is_infinite() {
        return p.a_max * free;
    }
    let s_star = p.s0 + (v * p.time_headway + v * dv / (2.0 * (p.a_max * p.b_comf).sqrt())).max(0.0);
    let gap = gap.max(1e-3);
    p.a_max * (free - (s_star / gap).powi(2))
}

/// Gap acceptance on the target lane. `lead_dv` and `lag_dv` are the other
/// vehicle's speed minus ours. Thresholds are inclusive.
pub fn gap_accept(lead_gap: f64, lag_gap: f64, lead_dv: f64, lag_dv: f64, p: &IdmParams) -> bool {
    lead_gap >= p.gap_lead_min + (-lead_dv).max(0.0) * p.time_headway
        && lag_gap >= p.gap_lag_min + lag_dv.max(0.0) * p.time_headway
}

/// Pure-pursuit lookahead distance at speed `v`.
pub fn lookahead_distance(v: f64) -> f64 {
    (0.5 * v).max(3.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Leader {
    /// Bumper-to-bumper gap, m.
    pub gap: f64,
    /// Own speed minus leader speed.
    pub closing_speed: f64,
}

/// A lane change the route asks for, with the gaps on the target lane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaneChangeQuery {
    pub connector: LaneId,
    pub direction: Signal,
    /// Distance along the route to the start of the connector.
    pub distance_to_start: f64,
    pub lead_gap: f64,
    pub lead_dv: f64,
    pub lag_gap: f64,
    pub lag_dv: f64,
}

/// What a rule-based driver knows about its surroundings for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodView {
    pub pose: Pose,
    pub speed: f64,
    pub geometry: VehicleGeometry,
    /// Closest vehicle ahead on the current path.
    pub leader: Option<Leader>,
    /// Closest vehicle ahead on the lane-change target, if a change is pending.
    pub target_leader: Option<Leader>,
    /// World point on the tracked path at [`lookahead_distance`].
    pub lookahead: Vec2,
    pub upcoming_change: Option<LaneChangeQuery>,
    /// The vehicle is currently on a lane-change connector.
    pub on_connector: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdmAgentState {
    pub current_lane: LaneId,
    pub target_lane: Option<LaneId>,
    pub signal: Signal,
    pub signal_elapsed: f64,
    pub params: IdmParams,
}

impl IdmAgentState {
    pub fn new(current_lane: LaneId, params: IdmParams) -> Self {
        Self { current_lane, target_lane: None, signal: Signal::Off, signal_elapsed: 0.0, params }
    }

    /// True once the driver has committed to the pending lane change.
    pub fn committed(&self) -> bool {
        self.target_lane.is_some()
    }
}

/// Distance before a connector at which the driver starts signalling.
fn signal_distance(v: f64, p: &IdmParams) -> f64 {
    v * (p.signal_lead_time + 1.0) + 5.0
}

/// Steering angle that drives the rear-axle-free bicycle through `target`.
pub fn pure_pursuit(pose: &Pose, target: Vec2, geom: &VehicleGeometry) -> f64 {
    let local = pose.to_local(target);
    let ld = local.norm();
    if ld < 1e-6 {
        return 0.0;
    }
    let alpha = local.y.atan2(local.x);
    (2.0 * geom.wheelbase() * alpha.sin() / ld).atan()
}

/// One decision of a rule-based driver: pure in `(view, st)`.
pub fn idm_policy_step(view: &NeighborhoodView, st: &IdmAgentState, dt: f64) -> (ControlInput, IdmAgentState) {
    let p = st.params;
    let mut next = st.clone();

    if view.on_connector {
        // Mid-manoeuvre: keep the signal on until the connector is left.
    } else if let Some(q) = view.upcoming_change {
        if next.signal == Signal::Off {
            if q.distance_to_start <= signal_distance(view.speed, &p) {
                next.signal = q.direction;
                next.signal_elapsed = 0.0;
            }
        } else {
            next.signal_elapsed += dt;
        }
        let ok = gap_accept(q.lead_gap, q.lag_gap, q.lead_dv, q.lag_dv, &p);
        if next.signal != Signal::Off && next.signal_elapsed + 1e-9 >= p.signal_lead_time && ok {
            next.target_lane = Some(q.connector);
        } else if !ok {
            next.target_lane = None;
        }
    } else {
        next.target_lane = None;
        next.signal = Signal::Off;
        next.signal_elapsed = 0.0;
    }

    let mut accel = match view.leader {
        Some(l) => idm_accel(view.speed, l.closing_speed, l.gap, &p),
        None => idm_accel(view.speed, 0.0, f64::INFINITY, &p),
    };
    if next.committed() || view.on_connector {
        if let Some(l) = view.target_leader {
            accel = accel.min(idm_accel(view.speed, l.closing_speed, l.gap, &p));
        }
    }
    let steer = pure_pursuit(&view.pose, view.lookahead, &view.geometry);
    (ControlInput::new(accel, steer, next.signal), next)
}
