//! Policy inputs: an ego-centric top-down raster and a fixed-layout feature vector.
//!
//! Raster convention: the observing vehicle sits at pixel `(size/2, size/2)`
//! heading toward the top row. Pixel `(col, row)` has its centre at ego-frame
//! `x = (size/2 - row) * mpp`, `y = (size/2 - col) * mpp`.

mod raster;

pub use raster::{Canvas, Rgb};

use crate::dynamics::STEER_BOUND;
use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Pose, Vec2};
use crate::road::RoadMap;
use crate::sim::{AgentId, AgentKind, AgentRecord, OrientedBox, World};

/// Bumped whenever the meaning of any raster channel or vector entry changes.
pub const OBS_LAYOUT_VERSION: u32 = 1;
/// Entries per neighbour slot.
pub const SLOT_WIDTH: usize = 8;
pub const EGO_BLOCK: usize = 4;

pub const LANE_COLOR: Rgb = [64, 64, 64];
const ROUTE_COLOR: Rgb = [110, 110, 110];
const ROUTE_BAND: f64 = 1.0;
/// Current footprints use 254 so the faded copy is exactly half.
const FULL: u8 = 254;
const HALF: u8 = 127;

/// Coordinates are snapped to this grid (m) before rasterizing so a rigid
/// motion of the whole scene yields the same bytes.
const SNAP: f64 = 1e-6;

pub fn kind_color(kind: AgentKind, faded: bool) -> Rgb {
    let i = if faded { HALF } else { FULL };
    match kind {
        AgentKind::EgoLearner => [0, i, 0],
        AgentKind::Idm => [0, 0, i],
        AgentKind::Rl | AgentKind::Sp1 | AgentKind::Sp2 => [i, 0, 0],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSpec {
    pub raster_px: usize,
    pub meters_per_pixel: f64,
    pub neighbor_slots: usize,
    /// Arc-length offsets of the route waypoints, m.
    pub route_offsets: Vec<f64>,
    pub position_scale: f64,
    pub speed_scale: f64,
    pub accel_scale: f64,
}

impl Default for ObservationSpec {
    fn default() -> Self {
        Self {
            raster_px: 128,
            meters_per_pixel: 0.5,
            neighbor_slots: 8,
            route_offsets: vec![5.0, 10.0, 20.0, 40.0],
            position_scale: 64.0,
            speed_scale: 20.0,
            accel_scale: 6.0,
        }
    }
}

impl ObservationSpec {
    pub fn vector_dim(&self) -> usize {
        self.neighbor_slots * SLOT_WIDTH + EGO_BLOCK + 2 * self.route_offsets.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.raster_px < 8 || !self.raster_px.is_multiple_of(8) {
            return Err(Error::Config(format!("raster size {} must be a positive multiple of 8", self.raster_px)));
        }
        if !(self.meters_per_pixel > 0.0) {
            return Err(Error::Config("meters_per_pixel must be positive".into()));
        }
        if self.route_offsets.windows(2).any(|w| w[1] < w[0]) || self.route_offsets.iter().any(|&o| o < 0.0) {
            return Err(Error::Config("route offsets must be non-negative and ascending".into()));
        }
        Ok(())
    }

    /// Half the window side, m.
    pub fn half_window(&self) -> f64 {
        0.5 * self.raster_px as f64 * self.meters_per_pixel
    }
}

/// RGB raster, channel-major, values 0..=255 standing for [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    pub canvas: Canvas,
    pub meters_per_pixel: f64,
}

impl RasterImage {
    pub fn size(&self) -> usize {
        self.canvas.width
    }

    /// Intensities in [0, 1], channel-major.
    pub fn to_unit(&self) -> Vec<f64> {
        self.canvas.data.iter().map(|&b| b as f64 / 255.0).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationFrame {
    pub raster: RasterImage,
    pub vector: Vec<f64>,
}

/// Full observation of agent `id` in its own frame.
pub fn observe(world: &World, id: AgentId, spec: &ObservationSpec) -> Result<ObservationFrame> {
    let me = world.agent(id).filter(|a| a.alive).ok_or_else(|| Error::Config(format!("agent {id} is not alive")))?;
    Ok(ObservationFrame { raster: rasterize(world.map(), world.agents(), me, spec), vector: encode_vector(world.agents(), me, spec) })
}

fn snap(x: f64) -> f64 {
    (x / SNAP).round() * SNAP
}

/// Maps world points into the pixel grid of an ego-centric window.
struct EgoView {
    pose: Pose,
    half_px: f64,
    mpp: f64,
    reach: f64,
}

impl EgoView {
    fn local(&self, p: Vec2) -> Vec2 {
        let l = self.pose.to_local(p);
        Vec2::new(snap(l.x), snap(l.y))
    }

    fn px(&self, l: Vec2) -> (f64, f64) {
        (self.half_px - l.y / self.mpp, self.half_px - l.x / self.mpp)
    }

    fn near(&self, p: Vec2, slack: f64) -> bool {
        p.distance(self.pose.position) <= self.reach + slack
    }
}

/// Fills a band of `width` around the polyline `pts` (already ego-local).
fn draw_band(canvas: &mut Canvas, view: &EgoView, pts: &[Vec2], width: f64, color: Rgb) {
    let half = 0.5 * width;
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let d = b - a;
        let len = d.norm();
        if len < 1e-9 {
            continue;
        }
        let mid = a.lerp(b, 0.5);
        if mid.norm() > view.reach + 0.5 * len + half {
            continue;
        }
        let n = d.perp() * (half / len);
        let quad = [view.px(a + n), view.px(b + n), view.px(b - n), view.px(a - n)];
        canvas.fill_convex(&quad, color);
    }
}

fn draw_vehicle(canvas: &mut Canvas, view: &EgoView, obb: &OrientedBox, color: Rgb) {
    let corners = obb.corners().map(|c| view.px(view.local(c)));
    if canvas.fill_convex(&corners, color) == 0 {
        // Sub-pixel vehicles still occupy the pixel under their centroid.
        let (u, v) = view.px(view.local(obb.center));
        let (c, r) = (u.round(), v.round());
        if c >= 0.0 && r >= 0.0 && (c as usize) < canvas.width && (r as usize) < canvas.height {
            canvas.set(r as usize, c as usize, color);
        }
    }
}

/// Top-down raster around `me`: lanes, `me`'s route, previous footprints
/// at half intensity, then current footprints.
pub fn rasterize(map: &RoadMap, agents: &[AgentRecord], me: &AgentRecord, spec: &ObservationSpec) -> RasterImage {
    let n = spec.raster_px;
    let mut canvas = Canvas::new(n, n);
    let view = EgoView {
        pose: me.state.pose(),
        half_px: n as f64 / 2.0,
        mpp: spec.meters_per_pixel,
        reach: spec.half_window() * std::f64::consts::SQRT_2,
    };

    for lane in map.lanes() {
        let b = lane.bounds();
        let bx = (b.min.x - view.pose.position.x).max(view.pose.position.x - b.max.x).max(0.0);
        let by = (b.min.y - view.pose.position.y).max(view.pose.position.y - b.max.y).max(0.0);
        if bx.hypot(by) > view.reach + lane.width {
            continue;
        }
        let pts: Vec<Vec2> = lane.centerline.iter().map(|&p| view.local(p)).collect();
        draw_band(&mut canvas, &view, &pts, lane.width, LANE_COLOR);
    }
    let route: Vec<Vec2> = me.route.centerline().iter().map(|&p| view.local(p)).collect();
    draw_band(&mut canvas, &view, &route, ROUTE_BAND, ROUTE_COLOR);

    let visible = |p: Vec2, a: &AgentRecord| view.near(p, a.geom.length);
    for a in agents.iter().filter(|a| a.alive) {
        if let Some(prev) = a.prev_state {
            if visible(prev.position(), a) {
                draw_vehicle(&mut canvas, &view, &OrientedBox::of_vehicle(&prev, &a.geom), kind_color(a.kind, true));
            }
        }
    }
    for a in agents.iter().filter(|a| a.alive && a.id != me.id) {
        if visible(a.state.position(), a) {
            draw_vehicle(&mut canvas, &view, &a.obb(), kind_color(a.kind, false));
        }
    }
    // The observer is drawn last and always in the ego colour.
    draw_vehicle(&mut canvas, &view, &me.obb(), kind_color(AgentKind::EgoLearner, false));

    RasterImage { canvas, meters_per_pixel: spec.meters_per_pixel }
}

/// Live agents other than `me`, nearest first, ties by id.
pub fn nearest_neighbors<'a>(agents: &'a [AgentRecord], me: &AgentRecord, k: usize) -> Vec<&'a AgentRecord> {
    let p = me.state.position();
    let mut others: Vec<(f64, &AgentRecord)> = agents
        .iter()
        .filter(|a| a.alive && a.id != me.id)
        .map(|a| (a.state.position().distance(p), a))
        .collect();
    others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.id.cmp(&b.1.id)));
    others.into_iter().take(k).map(|(_, a)| a).collect()
}

/// Fixed-layout feature vector:
/// `slots × [rel_x, rel_y, sin Δψ, cos Δψ, speed, accel, signal, valid]`,
/// then `[speed, accel, steer, signal]` of `me`, then route waypoints `(x, y)`.
pub fn encode_vector(agents: &[AgentRecord], me: &AgentRecord, spec: &ObservationSpec) -> Vec<f64> {
    let mut v = vec![0.0; spec.vector_dim()];
    let pose = me.state.pose();
    let unit = |x: f64| (x / spec.position_scale).clamp(-1.0, 1.0);
    for (slot, a) in nearest_neighbors(agents, me, spec.neighbor_slots).into_iter().enumerate() {
        let rel = pose.to_local(a.state.position());
        let dpsi = wrap_angle(a.state.psi - me.state.psi);
        let o = slot * SLOT_WIDTH;
        v[o..o + SLOT_WIDTH].copy_from_slice(&[
            unit(rel.x),
            unit(rel.y),
            dpsi.sin(),
            dpsi.cos(),
            a.state.v / spec.speed_scale,
            a.last_control.accel / spec.accel_scale,
            a.signal.as_scalar(),
            1.0,
        ]);
    }
    let o = spec.neighbor_slots * SLOT_WIDTH;
    v[o] = me.state.v / spec.speed_scale;
    v[o + 1] = me.last_control.accel / spec.accel_scale;
    v[o + 2] = me.last_control.steer / STEER_BOUND;
    v[o + 3] = me.signal.as_scalar();
    let o = o + EGO_BLOCK;
    for (i, w) in me.route.reference_waypoints(&pose, &spec.route_offsets).into_iter().enumerate() {
        v[o + 2 * i] = unit(w.x);
        v[o + 2 * i + 1] = unit(w.y);
    }
    v
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::dynamics::{ControlInput, Signal, VehicleState};
    use crate::road::{Label, Route};
    use crate::sim::{Controller, EpisodeConfig};

    fn world_with(states: &[VehicleState]) -> World {
        let cfg = EpisodeConfig { spawn_prob: 0.0, warmup_steps: 0, ..Default::default() };
        let mut w = World::with_defaults(Arc::new(RoadMap::straight_road()), cfg).unwrap();
        let r = Route::from_lanes(w.map(), vec![1, 2]).unwrap();
        w.place_ego(states[0], r.clone(), Label::D, Controller::External);
        for s in &states[1..] {
            w.insert_agent(AgentKind::Idm, *s, r.clone(), Label::D, Controller::Fixed(ControlInput::default()));
        }
        w
    }

    #[test]
    fn default_layout_is_76() {
        assert_eq!(ObservationSpec::default().vector_dim(), 76);
    }

    #[test]
    fn lone_ego_vector() {
        let w = world_with(&[VehicleState::new(10.0, 0.0, 0.0, 10.0)]);
        let v = w.observe(0).unwrap().vector;
        assert!(v[..64].iter().all(|&x| x == 0.0));
        assert_eq!(v[64], 0.5);
        assert_eq!(&v[68..76], &[5.0 / 64.0, 0.0, 10.0 / 64.0, 0.0, 20.0 / 64.0, 0.0, 40.0 / 64.0, 0.0]);
    }

    #[test]
    fn neighbor_dead_ahead() {
        let mut w = world_with(&[VehicleState::new(10.0, 0.0, 0.0, 10.0), VehicleState::new(20.0, 0.0, 0.0, 10.0)]);
        w.agent_mut(1).unwrap().signal = Signal::Right;
        let v = w.observe(0).unwrap().vector;
        assert_eq!(&v[..8], &[10.0 / 64.0, 0.0, 0.0, 1.0, 0.5, 0.0, -1.0, 1.0]);
        assert!(v[8..64].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn ego_at_center_pointing_up() {
        let w = world_with(&[VehicleState::new(30.0, 0.0, 0.0, 0.0)]);
        let img = w.observe(0).unwrap().raster;
        let c = &img.canvas;
        assert_eq!(c.pixel(64, 64), [0, FULL, 0]);
        // 4.6 m long: rows 60..=68 at 0.5 m/px; 1.9 m wide: cols 63..=65.
        assert_eq!(c.pixel(60, 64), [0, FULL, 0]);
        assert_eq!(c.pixel(58, 64), ROUTE_COLOR);
        assert_eq!(c.pixel(64, 67), LANE_COLOR);
        assert_eq!(c.pixel(64, 69), [0, 0, 0]);
    }

    #[test]
    fn tiny_vehicles_still_show() {
        let spec = ObservationSpec { raster_px: 16, meters_per_pixel: 8.0, ..Default::default() };
        let w = world_with(&[VehicleState::new(30.0, 0.0, 0.0, 0.0), VehicleState::new(50.0, 0.0, 0.0, 0.0)]);
        let me = w.ego().unwrap();
        let img = rasterize(w.map(), w.agents(), me, &spec);
        let blue = (0..16).flat_map(|r| (0..16).map(move |c| (r, c))).filter(|&(r, c)| img.canvas.pixel(r, c) == [0, 0, FULL]);
        assert_eq!(blue.count(), 1);
    }
}
