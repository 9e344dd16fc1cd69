//! Map-derived lane-change corridors and the neighbourhood queries rule-based drivers use.

use std::collections::BTreeMap;

use crate::dynamics::Signal;
use crate::geometry::{cumulative_lengths, sample_polyline, Vec2};
use crate::idm::{lookahead_distance, LaneChangeQuery, Leader, NeighborhoodView};
use crate::road::{LaneId, RoadMap, Route};

/// Lateral distance below which another vehicle counts as being on a path.
pub(crate) const SAME_PATH_OFFSET: f64 = 2.2;
/// Vehicles farther than this are ignored by neighbourhood queries.
const QUERY_RADIUS: f64 = 150.0;
const NO_GAP: f64 = 1e9;

/// The row a lane-change connector leads into, extended backwards so lag
/// vehicles are visible.
#[derive(Debug, Clone)]
pub struct ChangeCorridor {
    pub connector: LaneId,
    pub direction: Signal,
    pub row: Route,
}

/// Every connector (a successor that is not the straight continuation) with its target row.
pub fn build_corridors(map: &RoadMap) -> BTreeMap<LaneId, ChangeCorridor> {
    let mut connectors = Vec::new();
    for lane in map.lanes() {
        let straight = map.straight_successor(lane.id);
        for &succ in &lane.successors {
            if Some(succ) != straight && !connectors.contains(&succ) {
                connectors.push(succ);
            }
        }
    }
    let mut out = BTreeMap::new();
    for &id in &connectors {
        let conn = map.lane(id).unwrap();
        let Some(&target) = conn.successors.first() else { continue };
        let mut ids = vec![target];
        for _ in 0..2 {
            let head = ids[0];
            let pred = map.lane(head).unwrap().predecessors.iter().copied().find(|&p| {
                !connectors.contains(&p) && map.straight_successor(p) == Some(head)
            });
            match pred {
                Some(p) => ids.insert(0, p),
                None => break,
            }
        }
        if let Some(next) = map.straight_successor(target) {
            ids.push(next);
        }
        let Ok(row) = Route::from_lanes(map, ids) else { continue };
        let c = &conn.centerline;
        let t = &map.lane(target).unwrap().centerline;
        let shift = c[c.len() - 1] - c[0];
        let direction = if (t[1] - t[0]).cross(shift) > 0.0 { Signal::Left } else { Signal::Right };
        out.insert(id, ChangeCorridor { connector: id, direction, row });
    }
    out
}

/// Minimal per-vehicle data the queries need.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Body {
    pub position: Vec2,
    pub speed: f64,
    pub length: f64,
}

/// Closest vehicle ahead along `path`, measured from arc length `s_self`.
pub(crate) fn leader_on(path: &Route, s_self: f64, me: &Body, others: &[Body]) -> Option<Leader> {
    let mut best: Option<Leader> = None;
    for o in others {
        if o.position.distance(me.position) > QUERY_RADIUS {
            continue;
        }
        let pr = path.project(o.position);
        if pr.d.abs() >= SAME_PATH_OFFSET || pr.s <= s_self {
            continue;
        }
        let gap = pr.s - s_self - 0.5 * (me.length + o.length);
        if best.is_none_or(|b| gap < b.gap) {
            best = Some(Leader { gap, closing_speed: me.speed - o.speed });
        }
    }
    best
}

/// Lead and lag gaps on a corridor row, as `(lead_gap, lead_dv, lag_gap, lag_dv, lead)`.
pub(crate) fn corridor_gaps(row: &Route, me: &Body, others: &[Body]) -> (f64, f64, f64, f64, Option<Leader>) {
    let s_self = row.project(me.position).s;
    let (mut lead, mut lead_dv, mut lag, mut lag_dv) = (NO_GAP, 0.0, NO_GAP, 0.0);
    for o in others {
        if o.position.distance(me.position) > QUERY_RADIUS {
            continue;
        }
        let pr = row.project(o.position);
        if pr.d.abs() >= SAME_PATH_OFFSET {
            continue;
        }
        let ds = pr.s - s_self;
        let gap = ds.abs() - 0.5 * (me.length + o.length);
        if ds >= 0.0 {
            if gap < lead {
                lead = gap;
                lead_dv = o.speed - me.speed;
            }
        } else if gap < lag {
            lag = gap;
            lag_dv = o.speed - me.speed;
        }
    }
    let leader = (lead < NO_GAP).then_some(Leader { gap: lead, closing_speed: -lead_dv });
    (lead.max(0.0), lead_dv, lag.max(0.0), lag_dv, leader)
}

/// Inputs for one rule-based driver's neighbourhood view.
pub(crate) struct ViewQuery<'a> {
    pub map: &'a RoadMap,
    pub corridors: &'a BTreeMap<LaneId, ChangeCorridor>,
    pub route: &'a Route,
    pub committed: bool,
}

pub(crate) fn build_view(
    q: &ViewQuery<'_>,
    pose: crate::geometry::Pose,
    me: &Body,
    geometry: crate::dynamics::VehicleGeometry,
    others: &[Body],
) -> NeighborhoodView {
    let route = q.route;
    let s = route.project(me.position).s;
    let idx = route.lane_index_at(s);
    let lane_id = route.lane_ids[idx];
    let on_connector = q.corridors.contains_key(&lane_id) && idx > 0;

    let next = route.lane_ids.get(idx + 1).copied();
    let pending = next.and_then(|n| q.corridors.get(&n));
    let mut upcoming_change = None;
    let mut target_leader = None;
    if let Some(c) = pending {
        let (lead_gap, lead_dv, lag_gap, lag_dv, leader) = corridor_gaps(&c.row, me, others);
        upcoming_change = Some(LaneChangeQuery {
            connector: c.connector,
            direction: c.direction,
            distance_to_start: (route.lane_end(idx) - s).max(0.0),
            lead_gap,
            lead_dv,
            lag_gap,
            lag_dv,
        });
        target_leader = leader;
    } else if on_connector {
        let c = &q.corridors[&lane_id];
        target_leader = corridor_gaps(&c.row, me, others).4;
    }

    let ld = lookahead_distance(me.speed);
    let lookahead = match pending {
        Some(_) if !q.committed && s + ld > route.lane_end(idx) => {
            // Until committed, keep tracking the straight continuation.
            let over = s + ld - route.lane_end(idx);
            match q.map.straight_successor(lane_id).and_then(|id| q.map.lane(id)) {
                Some(lane) => sample_polyline(&lane.centerline, &cumulative_lengths(&lane.centerline), over).0,
                None => route.sample(s + ld).0,
            }
        }
        _ => route.sample(s + ld).0,
    };

    NeighborhoodView {
        pose,
        speed: me.speed,
        geometry,
        leader: leader_on(route, s, me, others),
        target_leader,
        lookahead,
        upcoming_change,
        on_connector,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_corridors() {
        let map = RoadMap::zipper_merge();
        let c = build_corridors(&map);
        let ids: Vec<_> = c.keys().copied().collect();
        assert_eq!(ids, vec![40, 41, 42, 43, 44, 45, 46, 47]);
        assert_eq!(c[&40].direction, Signal::Right);
        assert_eq!(c[&41].direction, Signal::Left);
        assert_eq!(c[&40].row.lane_ids, vec![20, 21, 22, 23]);
        assert_eq!(c[&45].row.lane_ids, vec![12, 13, 50]);
    }

    #[test]
    fn gaps_split_lead_and_lag() {
        let map = RoadMap::zipper_merge();
        let c = build_corridors(&map);
        let row = &c[&40].row;
        let me = Body { position: Vec2::new(130.0, 3.7), speed: 10.0, length: 4.6 };
        let others = [
            Body { position: Vec2::new(150.0, 0.0), speed: 8.0, length: 4.6 },
            Body { position: Vec2::new(110.0, 0.0), speed: 12.0, length: 4.6 },
            Body { position: Vec2::new(140.0, 3.7), speed: 0.0, length: 4.6 },
        ];
        let (lead, lead_dv, lag, lag_dv, leader) = corridor_gaps(row, &me, &others);
        assert!((lead - 15.4).abs() < 1e-9);
        assert!((lead_dv + 2.0).abs() < 1e-12);
        assert!((lag - 15.4).abs() < 1e-9);
        assert!((lag_dv - 2.0).abs() < 1e-12);
        assert!((leader.unwrap().closing_speed - 2.0).abs() < 1e-12);
    }
}
