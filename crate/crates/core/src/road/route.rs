use rand::Rng;

use super::{Label, LaneId, RoadMap};
use crate::error::{Error, Result};
use crate::geometry::{cumulative_lengths, project_onto_polyline, sample_polyline, Pose, Projection, Vec2};

/// Spacing of the densified reference path.
const REFERENCE_SPACING: f64 = 0.5;
/// Relative tolerance for treating two route costs as equal.
const TIE_EPS: f64 = 1e-9;

/// A connected lane sequence with its concatenated centerline.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub lane_ids: Vec<LaneId>,
    /// Centerline resampled so consecutive points are at most 0.5 m apart.
    pub reference_path: Vec<Vec2>,
    // The un-densified concatenation; same curve, fewer vertices for queries.
    coarse: Vec<Vec2>,
    coarse_cum: Vec<f64>,
    /// Arc-length offset in `coarse` at which each lane begins.
    lane_starts: Vec<f64>,
}

impl Route {
    /// Builds a route from lanes that must be connected by directed edges.
    pub fn from_lanes(map: &RoadMap, lane_ids: Vec<LaneId>) -> Result<Self> {
        if lane_ids.is_empty() {
            return Err(Error::Graph("empty route".into()));
        }
        let mut coarse: Vec<Vec2> = Vec::new();
        let mut lane_starts = Vec::with_capacity(lane_ids.len());
        for (i, &id) in lane_ids.iter().enumerate() {
            let lane = map.lane(id).ok_or_else(|| Error::Graph(format!("route uses missing lane {id}")))?;
            if i > 0 && !map.lane(lane_ids[i - 1]).unwrap().successors.contains(&id) {
                return Err(Error::Graph(format!("route lanes {} -> {id} are not connected", lane_ids[i - 1])));
            }
            let mut pts = lane.centerline.iter().copied();
            if let Some(&last) = coarse.last() {
                let first = lane.centerline[0];
                if first.distance(last) < 1e-6 {
                    pts.next();
                }
                lane_starts.push(cumulative_lengths(&coarse).last().copied().unwrap_or(0.0));
            } else {
                lane_starts.push(0.0);
            }
            coarse.extend(pts);
        }
        let coarse_cum = cumulative_lengths(&coarse);

        let mut reference_path = Vec::with_capacity(coarse_cum.last().unwrap().ceil() as usize * 2 + 2);
        reference_path.push(coarse[0]);
        for w in coarse.windows(2) {
            let n = (w[0].distance(w[1]) / REFERENCE_SPACING).ceil().max(1.0) as usize;
            for k in 1..=n {
                reference_path.push(w[0].lerp(w[1], k as f64 / n as f64));
            }
        }
        Ok(Self { lane_ids, reference_path, coarse, coarse_cum, lane_starts })
    }

    pub fn length(&self) -> f64 {
        *self.coarse_cum.last().unwrap()
    }

    pub fn last_lane(&self) -> LaneId {
        *self.lane_ids.last().unwrap()
    }

    /// The concatenated lane centerlines without densification.
    pub fn centerline(&self) -> &[Vec2] {
        &self.coarse
    }

    pub fn project(&self, p: Vec2) -> Projection {
        project_onto_polyline(&self.coarse, &self.coarse_cum, p)
    }

    /// Point and heading at arc length `s`, clamped to the route.
    pub fn sample(&self, s: f64) -> (Vec2, f64) {
        sample_polyline(&self.coarse, &self.coarse_cum, s)
    }

    /// Index into `lane_ids` of the lane covering arc length `s`.
    pub fn lane_index_at(&self, s: f64) -> usize {
        self.lane_starts.partition_point(|&start| start <= s).saturating_sub(1)
    }

    /// Arc length at which lane `idx` of the route begins.
    pub fn lane_start(&self, idx: usize) -> f64 {
        self.lane_starts[idx]
    }

    /// Arc length at which lane `idx` of the route ends.
    pub fn lane_end(&self, idx: usize) -> f64 {
        self.lane_starts.get(idx + 1).copied().unwrap_or_else(|| self.length())
    }

    /// Route points at arc offsets ahead of the ego, in the ego frame.
    /// Offsets past the route end repeat the final point.
    pub fn reference_waypoints(&self, ego: &Pose, offsets: &[f64]) -> Vec<Vec2> {
        let s0 = self.project(ego.position).s;
        offsets.iter().map(|&o| ego.to_local(self.sample(s0 + o).0)).collect()
    }
}

impl RoadMap {
    /// Shortest route by arc length from a lane labelled `start` to a lane
    /// labelled `goal`. Equal-length alternatives are chosen with `rng`.
    pub fn plan_route<R: Rng + ?Sized>(&self, start: Label, goal: Label, rng: &mut R) -> Result<Route> {
        let starts: Vec<LaneId> = self.lanes_with_label(start).map(|l| l.id).collect();
        self.plan_route_from(&starts, goal, rng)
            .ok_or_else(|| Error::Routing { start: start.to_string(), goal: goal.to_string() })
    }

    /// Shortest route starting at one of `starts` (whole lanes included) and
    /// ending on a lane labelled `goal`.
    pub fn plan_route_from<R: Rng + ?Sized>(&self, starts: &[LaneId], goal: Label, rng: &mut R) -> Option<Route> {
        let cost = self.cost_to_goal(goal);
        let best = starts.iter().filter_map(|id| cost.get(id).copied().flatten()).fold(f64::INFINITY, f64::min);
        if !best.is_finite() {
            return None;
        }
        let ties: Vec<LaneId> = starts
            .iter()
            .copied()
            .filter(|id| cost[id].is_some_and(|c| c <= best * (1.0 + TIE_EPS)))
            .collect();
        let mut current = ties[rng.random_range(0..ties.len())];
        let mut lanes = vec![current];
        loop {
            let lane = self.lane(current).unwrap();
            if lane.label == Some(goal) {
                break;
            }
            let remaining = cost[&current].unwrap() - lane.length();
            let options: Vec<LaneId> = lane
                .successors
                .iter()
                .copied()
                .filter(|s| cost[s].is_some_and(|c| (c - remaining).abs() <= TIE_EPS * remaining.max(1.0)))
                .collect();
            current = options[rng.random_range(0..options.len())];
            lanes.push(current);
        }
        Some(Route::from_lanes(self, lanes).expect("planned lanes are connected"))
    }

    /// For every lane, the length of the shortest lane chain from (and
    /// including) that lane to the end of a goal-labelled lane.
    fn cost_to_goal(&self, goal: Label) -> std::collections::BTreeMap<LaneId, Option<f64>> {
        let mut cost: std::collections::BTreeMap<LaneId, Option<f64>> =
            self.lanes().map(|l| (l.id, None)).collect();
        // Bellman-Ford style relaxation; the graph is tiny and acyclic in practice.
        for lane in self.lanes().filter(|l| l.label == Some(goal)) {
            cost.insert(lane.id, Some(lane.length()));
        }
        for _ in 0..self.lane_count() {
            let mut changed = false;
            for lane in self.lanes() {
                if lane.label == Some(goal) {
                    continue;
                }
                let via = lane.successors.iter().filter_map(|s| cost[s]).fold(f64::INFINITY, f64::min);
                if via.is_finite() {
                    let c = lane.length() + via;
                    if cost[&lane.id].is_none_or(|old| c < old) {
                        cost.insert(lane.id, Some(c));
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        cost
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn chain_route() {
        let map = RoadMap::parse(
            "lane 1 kind=straight label=A pts=0,0;10,0\nlane 2 kind=straight pts=10,0;20,0\n\
             lane 3 kind=straight label=D pts=20,0;30,0\nedge 1 2\nedge 2 3\n",
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = map.plan_route(Label::A, Label::D, &mut rng).unwrap();
        assert_eq!(r.lane_ids, vec![1, 2, 3]);
        assert!((r.length() - 30.0).abs() < 1e-12);
        assert_eq!(r.lane_index_at(15.0), 1);
        assert_eq!(r.lane_index_at(29.0), 2);
    }

    #[test]
    fn disconnected_is_routing_error() {
        let map = RoadMap::parse(
            "lane 1 kind=straight label=A pts=0,0;10,0\nlane 2 kind=straight label=D pts=10,0;20,0\n\
             lane 3 kind=straight label=E pts=0,9;10,9\nedge 1 2\n",
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(map.plan_route(Label::A, Label::E, &mut rng), Err(Error::Routing { .. })));
    }

    #[test]
    fn a_to_f_uses_merge_connectors() {
        let map = RoadMap::zipper_merge();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let r = map.plan_route(Label::A, Label::F, &mut rng).unwrap();
        assert_eq!(r.lane_ids.first(), Some(&1));
        assert_eq!(r.lane_ids.last(), Some(&52));
        // Two lane changes: top row to middle, then middle to bottom/off-ramp.
        assert!(r.lane_ids.contains(&40));
        assert!(r.lane_ids.contains(&46));
    }

    #[test]
    fn waypoints_on_straight_route() {
        let map = RoadMap::straight_road();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = map.plan_route(Label::A, Label::D, &mut rng).unwrap();
        let wp = r.reference_waypoints(&Pose::new(20.0, 0.0, 0.0), &[5.0, 10.0]);
        assert!(wp[0].distance(Vec2::new(5.0, 0.0)) < 1e-12);
        assert!(wp[1].distance(Vec2::new(10.0, 0.0)) < 1e-12);
        let end = r.reference_waypoints(&Pose::new(120.0, 0.0, 0.0), &[0.0, 5.0, 40.0]);
        for p in end {
            assert!(p.norm() < 1e-12);
        }
    }
}
