//! Line-oriented map format.
//!
//! ```text
//! lane <id> kind=straight|polyline width=<m> [label=<A..F>] pts=x0,y0;x1,y1;...
//! lane <id> kind=clothoid width=<m> [label=<A..F>] start=x,y,heading k0=<v> krate=<v> len=<m>
//! edge <from> <to>
//! ```
//! `width` is optional everywhere. `#` starts a comment.

use std::collections::HashMap;

use super::{tessellate_clothoid, Label, LaneId, LaneKind, LaneSegment, RoadMap, CLOTHOID_STEP, DEFAULT_LANE_WIDTH};
use crate::error::{Error, Result};
use crate::geometry::Vec2;

pub(super) fn parse_map(src: &str) -> Result<RoadMap> {
    let mut lanes = Vec::new();
    let mut edges = Vec::new();
    for (idx, raw) in src.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        match tokens.next().unwrap() {
            "lane" => lanes.push(parse_lane(line_no, tokens)?),
            "edge" => {
                let from = parse_id(line_no, tokens.next())?;
                let to = parse_id(line_no, tokens.next())?;
                if tokens.next().is_some() {
                    return Err(Error::parse(line_no, "trailing tokens after edge"));
                }
                edges.push((from, to));
            }
            other => return Err(Error::parse(line_no, format!("unknown record type {other:?}"))),
        }
    }
    RoadMap::new(lanes, &edges)
}

fn parse_id(line: usize, tok: Option<&str>) -> Result<LaneId> {
    let tok = tok.ok_or_else(|| Error::parse(line, "missing lane id"))?;
    tok.parse().map_err(|_| Error::parse(line, format!("bad lane id {tok:?}")))
}

fn parse_f64(line: usize, key: &str, v: &str) -> Result<f64> {
    let x: f64 = v.parse().map_err(|_| Error::parse(line, format!("bad number for {key}: {v:?}")))?;
    if !x.is_finite() {
        return Err(Error::parse(line, format!("non-finite {key}")));
    }
    Ok(x)
}

fn parse_points(line: usize, v: &str) -> Result<Vec<Vec2>> {
    v.split(';')
        .map(|pair| {
            let (x, y) = pair
                .split_once(',')
                .ok_or_else(|| Error::parse(line, format!("bad point {pair:?}")))?;
            Ok(Vec2::new(parse_f64(line, "pts", x)?, parse_f64(line, "pts", y)?))
        })
        .collect()
}

fn parse_lane<'a>(line: usize, mut tokens: impl Iterator<Item = &'a str>) -> Result<LaneSegment> {
    let id = parse_id(line, tokens.next())?;
    let mut fields = HashMap::new();
    for tok in tokens {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| Error::parse(line, format!("expected key=value, got {tok:?}")))?;
        if fields.insert(k, v).is_some() {
            return Err(Error::parse(line, format!("duplicate key {k}")));
        }
    }
    fn take<'s>(fields: &mut HashMap<&str, &'s str>, k: &str, line: usize, id: LaneId) -> Result<&'s str> {
        fields.remove(k).ok_or_else(|| Error::parse(line, format!("lane {id} missing {k}=")))
    }

    let kind = match take(&mut fields, "kind", line, id)? {
        "straight" => LaneKind::Straight,
        "clothoid" => LaneKind::Clothoid,
        "polyline" => LaneKind::Polyline,
        other => return Err(Error::parse(line, format!("unknown lane kind {other:?}"))),
    };
    let width = match fields.remove("width") {
        Some(w) => parse_f64(line, "width", w)?,
        None => DEFAULT_LANE_WIDTH,
    };
    let label = match fields.remove("label") {
        Some(l) => Some(l.parse::<Label>().map_err(|e| Error::parse(line, e))?),
        None => None,
    };

    let centerline = match kind {
        LaneKind::Straight | LaneKind::Polyline => {
            let pts = parse_points(line, take(&mut fields, "pts", line, id)?)?;
            if kind == LaneKind::Straight && pts.len() != 2 {
                return Err(Error::parse(line, "straight lanes take exactly two points"));
            }
            pts
        }
        LaneKind::Clothoid => {
            let start: Vec<&str> = take(&mut fields, "start", line, id)?.split(',').collect();
            if start.len() != 3 {
                return Err(Error::parse(line, "start= expects x,y,heading"));
            }
            let sx = parse_f64(line, "start", start[0])?;
            let sy = parse_f64(line, "start", start[1])?;
            let sh = parse_f64(line, "start", start[2])?;
            let k0 = parse_f64(line, "k0", take(&mut fields, "k0", line, id)?)?;
            let kr = parse_f64(line, "krate", take(&mut fields, "krate", line, id)?)?;
            let len = parse_f64(line, "len", take(&mut fields, "len", line, id)?)?;
            if len <= 0.0 {
                return Err(Error::Geometry(format!("lane {id} has non-positive length")));
            }
            tessellate_clothoid((sx, sy, sh), k0, kr, len, CLOTHOID_STEP)
        }
    };
    if let Some(k) = fields.keys().next() {
        return Err(Error::parse(line, format!("unexpected key {k:?}")));
    }
    LaneSegment::new(id, kind, centerline, width, label)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn malformed_records() {
        for bad in [
            "lane x kind=straight pts=0,0;1,0",
            "lane 1 kind=spline pts=0,0;1,0",
            "lane 1 kind=straight pts=0,0",
            "lane 1 kind=straight pts=0,0;1,0;2,0",
            "lane 1 kind=clothoid start=0,0 k0=0 krate=0 len=3",
            "lane 1 kind=straight pts=0,0;1,0 colour=red",
            "road 1 2",
            "edge 1",
        ] {
            assert!(matches!(parse_map(bad), Err(Error::Parse { .. })), "{bad}");
        }
    }

    #[test]
    fn comments_and_blank_lines() {
        let map = parse_map(
            "# header\n\n  lane 1 kind=polyline width=3 label=A pts=0,0;5,1;10,0 # trailing\n\
             lane 2 kind=clothoid label=D start=10,0,0 k0=0 krate=0.001 len=12\nedge 1 2\n",
        )
        .unwrap();
        assert_eq!(map.lane(1).unwrap().width, 3.0);
        assert_eq!(map.lane(2).unwrap().kind, LaneKind::Clothoid);
        assert_eq!(map.lane(2).unwrap().centerline.len(), 25);
    }
}
