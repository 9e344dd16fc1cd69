//! Directed lane graph of the merge scene.
//!
//! Every lane is a node holding a polyline centerline; edges point in the
//! direction of travel. Clothoid lanes are tessellated when the map is
//! built, so everything downstream of the loader only sees polylines.

mod clothoid;
mod parse;
mod route;

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;

pub use clothoid::{tessellate_clothoid, Clothoid};
pub use route::Route;

use crate::error::{Error, Result};
use crate::geometry::{cumulative_lengths, project_onto_polyline, Projection, RigidTransform, Vec2};

/// Lane width used when a map record does not give one.
pub const DEFAULT_LANE_WIDTH: f64 = 3.7;
/// Sampling step for clothoid tessellation.
pub const CLOTHOID_STEP: f64 = 0.5;
/// A centroid farther than this many lane widths from every centerline is off the road.
pub const OOB_WIDTH_FACTOR: f64 = 0.75;

pub type LaneId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    A,
    B,
    C,
    D,
    E,
    F,
}

impl Label {
    pub const SPAWNS: [Label; 3] = [Label::A, Label::B, Label::C];
    pub const GOALS: [Label; 3] = [Label::D, Label::E, Label::F];

    pub fn is_spawn(self) -> bool {
        matches!(self, Label::A | Label::B | Label::C)
    }

    pub fn is_goal(self) -> bool {
        !self.is_spawn()
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Label {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "A" => Label::A,
            "B" => Label::B,
            "C" => Label::C,
            "D" => Label::D,
            "E" => Label::E,
            "F" => Label::F,
            other => return Err(format!("unknown label {other:?}")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaneKind {
    Straight,
    Clothoid,
    Polyline,
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec2,
    pub max: Vec2,
}

impl Aabb {
    pub fn empty() -> Self {
        Self {
            min: Vec2::new(f64::INFINITY, f64::INFINITY),
            max: Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    pub fn include(&mut self, p: Vec2) {
        self.min = Vec2::new(self.min.x.min(p.x), self.min.y.min(p.y));
        self.max = Vec2::new(self.max.x.max(p.x), self.max.y.max(p.y));
    }

    pub fn inflate(&self, r: f64) -> Self {
        Self { min: self.min - Vec2::new(r, r), max: self.max + Vec2::new(r, r) }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn size(&self) -> Vec2 {
        self.max - self.min
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaneSegment {
    pub id: LaneId,
    pub kind: LaneKind,
    pub centerline: Vec<Vec2>,
    pub width: f64,
    pub label: Option<Label>,
    pub successors: Vec<LaneId>,
    pub predecessors: Vec<LaneId>,
    cum: Vec<f64>,
    bounds: Aabb,
}

impl LaneSegment {
    /// Builds a lane, checking its local geometry. Edges are attached by [`RoadMap::new`].
    pub fn new(
        id: LaneId,
        kind: LaneKind,
        centerline: Vec<Vec2>,
        width: f64,
        label: Option<Label>,
    ) -> Result<Self> {
        if centerline.len() < 2 {
            return Err(Error::Geometry(format!("lane {id} needs at least two points")));
        }
        if !(width > 0.0) {
            return Err(Error::Geometry(format!("lane {id} has non-positive width {width}")));
        }
        for w in centerline.windows(2) {
            if w[0].distance(w[1]) <= 1e-9 {
                return Err(Error::Geometry(format!(
                    "lane {id} has zero-length segment at ({}, {})",
                    w[0].x, w[0].y
                )));
            }
        }
        let cum = cumulative_lengths(&centerline);
        let mut bounds = Aabb::empty();
        for &p in &centerline {
            bounds.include(p);
        }
        Ok(Self {
            id,
            kind,
            centerline,
            width,
            label,
            successors: Vec::new(),
            predecessors: Vec::new(),
            cum,
            bounds,
        })
    }

    pub fn length(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    pub fn arc_lengths(&self) -> &[f64] {
        &self.cum
    }

    pub fn bounds(&self) -> Aabb {
        self.bounds
    }

    pub fn start(&self) -> Vec2 {
        self.centerline[0]
    }

    pub fn end(&self) -> Vec2 {
        *self.centerline.last().unwrap()
    }

    /// Arc length and signed lateral offset (left positive) of the closest
    /// centerline point.
    pub fn project(&self, p: Vec2) -> (f64, f64) {
        let pr = self.project_full(p);
        (pr.s, pr.d)
    }

    pub fn project_full(&self, p: Vec2) -> Projection {
        project_onto_polyline(&self.centerline, &self.cum, p)
    }

    /// In-bounds half-width around the centerline.
    pub fn bound_radius(&self) -> f64 {
        OOB_WIDTH_FACTOR * self.width
    }

    fn transformed(&self, t: &RigidTransform) -> Self {
        let pts: Vec<Vec2> = self.centerline.iter().map(|&p| t.apply(p)).collect();
        let mut lane = Self::new(self.id, self.kind, pts, self.width, self.label)
            .expect("rigid motion preserves lane validity");
        lane.successors = self.successors.clone();
        lane.predecessors = self.predecessors.clone();
        lane
    }
}

/// `(s, d)` of `point` relative to `lane`.
pub fn project_to_lane(point: Vec2, lane: &LaneSegment) -> (f64, f64) {
    lane.project(point)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoadMap {
    lanes: BTreeMap<LaneId, LaneSegment>,
    extent: Aabb,
}

impl RoadMap {
    /// Assembles a map from lanes and directed edges and validates the graph.
    pub fn new(lanes: Vec<LaneSegment>, edges: &[(LaneId, LaneId)]) -> Result<Self> {
        let mut by_id = BTreeMap::new();
        for lane in lanes {
            let id = lane.id;
            if by_id.insert(id, lane).is_some() {
                return Err(Error::Graph(format!("duplicate lane id {id}")));
            }
        }
        for &(from, to) in edges {
            if !by_id.contains_key(&from) {
                return Err(Error::Graph(format!("edge {from}->{to} references missing lane {from}")));
            }
            if !by_id.contains_key(&to) {
                return Err(Error::Graph(format!("edge {from}->{to} references missing lane {to}")));
            }
            let src = by_id.get_mut(&from).unwrap();
            if !src.successors.contains(&to) {
                src.successors.push(to);
            }
            let dst = by_id.get_mut(&to).unwrap();
            if !dst.predecessors.contains(&from) {
                dst.predecessors.push(from);
            }
        }
        let mut extent = Aabb::empty();
        for lane in by_id.values() {
            for &p in &lane.centerline {
                extent.include(p);
            }
        }
        let map = Self { lanes: by_id, extent };
        map.validate()?;
        Ok(map)
    }

    /// Parses the line-oriented map format.
    pub fn parse(src: &str) -> Result<Self> {
        parse::parse_map(src)
    }

    /// The shipped zipper-merge scene.
    pub fn zipper_merge() -> Self {
        Self::parse(include_str!("../../assets/zipper_merge.map")).expect("shipped map is valid")
    }

    /// A shorter zipper merge with the same entrances and exits and both
    /// lane-change zones back to back.
    pub fn reduced_merge() -> Self {
        Self::parse(include_str!("../../assets/reduced_merge.map")).expect("shipped map is valid")
    }

    /// A single straight road with one entrance (A) and one exit (D).
    pub fn straight_road() -> Self {
        Self::parse(include_str!("../../assets/straight_lane.map")).expect("shipped map is valid")
    }

    fn validate(&self) -> Result<()> {
        for lane in self.lanes.values() {
            for s in &lane.successors {
                let ok = self.lanes.get(s).is_some_and(|l| l.predecessors.contains(&lane.id));
                if !ok {
                    return Err(Error::Graph(format!("edge {}->{s} is not mirrored", lane.id)));
                }
            }
        }
        for label in self.spawn_labels() {
            let reachable = self.reachable_goals(label);
            if reachable.is_empty() {
                return Err(Error::Graph(format!("spawn label {label} cannot reach any goal")));
            }
        }
        Ok(())
    }

    pub fn lanes(&self) -> impl Iterator<Item = &LaneSegment> {
        self.lanes.values()
    }

    pub fn lane(&self, id: LaneId) -> Option<&LaneSegment> {
        self.lanes.get(&id)
    }

    pub fn lane_count(&self) -> usize {
        self.lanes.len()
    }

    pub fn extent(&self) -> Aabb {
        self.extent
    }

    pub fn lanes_with_label(&self, label: Label) -> impl Iterator<Item = &LaneSegment> {
        self.lanes.values().filter(move |l| l.label == Some(label))
    }

    pub fn spawn_labels(&self) -> Vec<Label> {
        Label::SPAWNS.into_iter().filter(|&l| self.lanes_with_label(l).next().is_some()).collect()
    }

    pub fn goal_labels(&self) -> Vec<Label> {
        Label::GOALS.into_iter().filter(|&l| self.lanes_with_label(l).next().is_some()).collect()
    }

    /// Goal labels reachable from any lane labelled `start`, by breadth-first search.
    pub fn reachable_goals(&self, start: Label) -> Vec<Label> {
        let mut seen = std::collections::BTreeSet::new();
        let mut queue: VecDeque<LaneId> = self.lanes_with_label(start).map(|l| l.id).collect();
        let mut goals = Vec::new();
        while let Some(id) = queue.pop_front() {
            if !seen.insert(id) {
                continue;
            }
            let lane = &self.lanes[&id];
            if let Some(label) = lane.label.filter(|l| l.is_goal()) {
                if !goals.contains(&label) {
                    goals.push(label);
                }
            }
            queue.extend(lane.successors.iter().copied());
        }
        goals.sort();
        goals
    }

    /// True iff `p` is more than 0.75 lane widths from every centerline.
    /// Points exactly on the boundary are in bounds.
    pub fn is_out_of_bounds(&self, p: Vec2) -> bool {
        for lane in self.lanes.values() {
            let r = lane.bound_radius();
            if !lane.bounds.inflate(r).contains(p) {
                continue;
            }
            let (_, d) = lane.project(p);
            if d.abs() <= r {
                return false;
            }
        }
        true
    }

    /// Lane whose centerline is closest to `p`, with the projection onto it.
    /// Ties resolve to the lowest lane id.
    pub fn nearest_lane(&self, p: Vec2) -> (LaneId, Projection) {
        let mut best: Option<(LaneId, Projection)> = None;
        for lane in self.lanes.values() {
            if let Some((_, b)) = &best {
                // Cheap reject: the box distance bounds the centerline distance.
                let bx = (lane.bounds.min.x - p.x).max(p.x - lane.bounds.max.x).max(0.0);
                let by = (lane.bounds.min.y - p.y).max(p.y - lane.bounds.max.y).max(0.0);
                if bx.hypot(by) > b.d.abs() {
                    continue;
                }
            }
            let pr = lane.project_full(p);
            if best.as_ref().is_none_or(|(_, b)| pr.d.abs() < b.d.abs()) {
                best = Some((lane.id, pr));
            }
        }
        best.expect("map has at least one lane")
    }

    /// Returns a copy of the map moved by a rigid transform.
    pub fn transformed(&self, t: &RigidTransform) -> Self {
        let lanes: BTreeMap<_, _> =
            self.lanes.iter().map(|(&id, l)| (id, l.transformed(t))).collect();
        let mut extent = Aabb::empty();
        for lane in lanes.values() {
            for &p in &lane.centerline {
                extent.include(p);
            }
        }
        Self { lanes, extent }
    }

    /// Straight-ahead successor of a lane: the successor whose initial
    /// direction deviates least from the lane's final direction.
    pub fn straight_successor(&self, id: LaneId) -> Option<LaneId> {
        let lane = self.lane(id)?;
        let n = lane.centerline.len();
        let dir = lane.centerline[n - 1] - lane.centerline[n - 2];
        let heading = dir.y.atan2(dir.x);
        lane.successors
            .iter()
            .copied()
            .map(|s| {
                let l = &self.lanes[&s];
                let d = l.centerline[1] - l.centerline[0];
                let dev = crate::geometry::wrap_angle(d.y.atan2(d.x) - heading).abs();
                (s, dev)
            })
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .map(|(s, _)| s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_lane_map() -> RoadMap {
        RoadMap::parse(
            "lane 1 kind=straight label=A pts=0,0;10,0\n\
             lane 2 kind=straight label=D pts=10,0;20,0\n\
             edge 1 2\n",
        )
        .unwrap()
    }

    #[test]
    fn minimal_graph() {
        let map = two_lane_map();
        assert_eq!(map.lane_count(), 2);
        assert_eq!(map.lane(1).unwrap().successors, vec![2]);
        assert_eq!(map.lane(2).unwrap().predecessors, vec![1]);
        assert!(map.lane(1).unwrap().predecessors.is_empty());
        assert!(map.lane(2).unwrap().successors.is_empty());
        assert_eq!(map.lane(1).unwrap().width, DEFAULT_LANE_WIDTH);
    }

    #[test]
    fn missing_edge_target_is_graph_error() {
        let err = RoadMap::parse(
            "lane 1 kind=straight label=A pts=0,0;10,0\n\
             lane 2 kind=straight label=D pts=10,0;20,0\n\
             edge 1 99\n",
        )
        .unwrap_err();
        assert!(matches!(err, Error::Graph(_)), "{err}");
    }

    #[test]
    fn zero_length_lane_is_geometry_error() {
        let err = RoadMap::parse("lane 1 kind=straight label=A pts=3,3;3,3\n").unwrap_err();
        assert!(matches!(err, Error::Geometry(_)), "{err}");
    }

    #[test]
    fn unreachable_goal_rejected_at_load() {
        let err = RoadMap::parse(
            "lane 1 kind=straight label=A pts=0,0;10,0\n\
             lane 2 kind=straight label=D pts=10,5;20,5\n",
        )
        .unwrap_err();
        assert!(matches!(err, Error::Graph(_)));
    }

    #[test]
    fn shipped_map_topology() {
        let map = RoadMap::zipper_merge();
        assert_eq!(map.spawn_labels(), Label::SPAWNS.to_vec());
        assert_eq!(map.goal_labels(), Label::GOALS.to_vec());
        // Breadth-first search over the authored file: every entrance reaches every exit.
        for start in Label::SPAWNS {
            assert_eq!(map.reachable_goals(start), Label::GOALS.to_vec(), "{start}");
        }
        let size = map.extent().size();
        assert!(size.x > 300.0 && size.x < 380.0, "extent {size:?}");
    }

    #[test]
    fn reduced_map_keeps_the_topology() {
        let map = RoadMap::reduced_merge();
        for start in Label::SPAWNS {
            assert_eq!(map.reachable_goals(start), Label::GOALS.to_vec(), "{start}");
        }
        for lane in map.lanes() {
            for s in &lane.successors {
                assert!(lane.end().distance(map.lane(*s).unwrap().start()) < 1e-3, "{} -> {s}", lane.id);
            }
        }
        assert!(map.extent().size().x < 250.0);
    }

    #[test]
    fn edges_mirror() {
        let map = RoadMap::zipper_merge();
        for lane in map.lanes() {
            for s in &lane.successors {
                assert!(map.lane(*s).unwrap().predecessors.contains(&lane.id));
            }
            for p in &lane.predecessors {
                assert!(map.lane(*p).unwrap().successors.contains(&lane.id));
            }
        }
    }

    #[test]
    fn clothoid_joins_are_continuous() {
        let map = RoadMap::zipper_merge();
        for lane in map.lanes() {
            for s in &lane.successors {
                let gap = lane.end().distance(map.lane(*s).unwrap().start());
                assert!(gap < 1e-3, "gap {gap} between {} and {s}", lane.id);
            }
        }
    }

    #[test]
    fn oob_rule() {
        let map = two_lane_map();
        let w = DEFAULT_LANE_WIDTH;
        assert!(!map.is_out_of_bounds(Vec2::new(5.0, 0.0)));
        assert!(!map.is_out_of_bounds(Vec2::new(5.0, 0.75 * w)));
        assert!(!map.is_out_of_bounds(Vec2::new(5.0, -0.75 * w)));
        assert!(map.is_out_of_bounds(Vec2::new(5.0, 0.75 * w + 0.01)));
        assert!(map.is_out_of_bounds(Vec2::new(25.0, 0.0)));
    }

    #[test]
    fn projection_axis_aligned() {
        let map = two_lane_map();
        let (s, d) = project_to_lane(Vec2::new(5.0, 1.5), map.lane(1).unwrap());
        assert!((s - 5.0).abs() < 1e-12 && (d - 1.5).abs() < 1e-12);
        let (_, d) = project_to_lane(Vec2::new(5.0, 0.0), map.lane(1).unwrap());
        assert_eq!(d, 0.0);
    }

    #[test]
    fn straight_successor_prefers_row() {
        let map = RoadMap::zipper_merge();
        assert_eq!(map.straight_successor(10), Some(11));
        assert_eq!(map.straight_successor(20), Some(21));
        assert_eq!(map.straight_successor(13), Some(50));
    }
}
