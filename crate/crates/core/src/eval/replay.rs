//! Whole-map replay frames rendered from an episode trace.

use std::fs;
use std::path::{Path, PathBuf};

use crate::geometry::Vec2;
use crate::observation::{kind_color, Canvas, Rgb, LANE_COLOR};
use crate::road::RoadMap;
use crate::sim::{OrientedBox, Outcome, TraceRow};

pub const COLLISION_COLOR: Rgb = [255, 255, 0];
const LABEL_COLOR: Rgb = [255, 255, 255];

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayStyle {
    pub meters_per_pixel: f64,
    /// Border around the map extent, m.
    pub margin: f64,
    pub labels: bool,
}

impl Default for ReplayStyle {
    fn default() -> Self {
        Self { meters_per_pixel: 0.5, margin: 5.0, labels: true }
    }
}

// 3×5 digit glyphs, one row per 3 bits, top row first.
const DIGITS: [[u8; 5]; 10] = [
    [7, 5, 5, 5, 7],
    [2, 6, 2, 2, 7],
    [7, 1, 7, 4, 7],
    [7, 1, 3, 1, 7],
    [5, 5, 7, 1, 1],
    [7, 4, 7, 1, 7],
    [7, 4, 7, 5, 7],
    [7, 1, 1, 2, 2],
    [7, 5, 7, 5, 7],
    [7, 5, 7, 1, 7],
];

fn draw_number(canvas: &mut Canvas, col: isize, row: isize, n: u32, color: Rgb) {
    let text = n.to_string();
    let width = text.len() as isize * 4 - 1;
    let mut x0 = col - width / 2;
    for ch in text.bytes() {
        let glyph = DIGITS[(ch - b'0') as usize];
        for (dy, bits) in glyph.iter().enumerate() {
            for dx in 0..3 {
                if bits & (4 >> dx) != 0 {
                    let (c, r) = (x0 + dx as isize, row + dy as isize);
                    if c >= 0 && r >= 0 && (c as usize) < canvas.width && (r as usize) < canvas.height {
                        canvas.set(r as usize, c as usize, color);
                    }
                }
            }
        }
        x0 += 4;
    }
}

struct Frame {
    min: Vec2,
    max: Vec2,
    mpp: f64,
}

impl Frame {
    fn px(&self, p: Vec2) -> (f64, f64) {
        ((p.x - self.min.x) / self.mpp, (self.max.y - p.y) / self.mpp)
    }
}

fn background(map: &RoadMap, f: &Frame, w: usize, h: usize) -> Canvas {
    let mut canvas = Canvas::new(w, h);
    for lane in map.lanes() {
        let half = 0.5 * lane.width;
        for seg in lane.centerline.windows(2) {
            let d = seg[1] - seg[0];
            let len = d.norm();
            if len < 1e-9 {
                continue;
            }
            let n = d.perp() * (half / len);
            let quad = [f.px(seg[0] + n), f.px(seg[1] + n), f.px(seg[1] - n), f.px(seg[0] - n)];
            canvas.fill_convex(&quad, LANE_COLOR);
        }
    }
    canvas
}

/// One frame per traced step, in step order. Vehicles use the observation
/// colours; agents that collided on a step are painted in the collision colour.
pub fn render_replay(map: &RoadMap, trace: &[TraceRow], style: &ReplayStyle) -> Vec<Canvas> {
    let ext = map.extent().inflate(style.margin);
    let f = Frame { min: ext.min, max: ext.max, mpp: style.meters_per_pixel };
    let size = ext.size();
    let (w, h) = ((size.x / f.mpp).ceil() as usize, (size.y / f.mpp).ceil() as usize);
    let base = background(map, &f, w, h);

    let mut frames = Vec::new();
    let mut i = 0;
    while i < trace.len() {
        let step = trace[i].step;
        let mut j = i;
        while j < trace.len() && trace[j].step == step {
            j += 1;
        }
        let rows = &trace[i..j];
        let mut canvas = base.clone();
        for r in rows {
            let obb = OrientedBox::new(r.state.position(), r.state.psi, r.length, r.width);
            let color = if r.outcome == Some(Outcome::Collision) { COLLISION_COLOR } else { kind_color(r.kind, false) };
            let corners = obb.corners().map(|c| f.px(c));
            if canvas.fill_convex(&corners, color) == 0 {
                let (c, rr) = f.px(obb.center);
                if c >= 0.0 && rr >= 0.0 && (c as usize) < w && (rr as usize) < h {
                    canvas.set(rr as usize, c as usize, color);
                }
            }
        }
        if style.labels {
            for r in rows {
                let (c, rr) = f.px(r.state.position());
                let lift = (0.5 * r.length.max(r.width) / f.mpp).ceil() as isize + 6;
                draw_number(&mut canvas, c.round() as isize, rr.round() as isize - lift, r.id, LABEL_COLOR);
            }
        }
        frames.push(canvas);
        i = j;
    }
    frames
}

/// Writes `frame_00000.ppm`, `frame_00001.ppm`, … into `dir`.
pub fn export_replay(map: &RoadMap, trace: &[TraceRow], style: &ReplayStyle, dir: &Path) -> crate::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for (k, frame) in render_replay(map, trace, style).iter().enumerate() {
        let path = dir.join(format!("frame_{k:05}.ppm"));
        let mut buf = Vec::with_capacity(frame.data.len() + 32);
        frame.write_ppm(&mut buf)?;
        fs::write(&path, buf)?;
        paths.push(path);
    }
    Ok(paths)
}
