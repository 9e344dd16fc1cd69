//! Scanline fill of convex polygons into a channel-major RGB byte grid.

use std::io::Write;

use crate::error::Result;

pub type Rgb = [u8; 3];

/// 3-channel image stored channel-major (C, H, W).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Canvas {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl Canvas {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0; 3 * width * height] }
    }

    pub fn get(&self, channel: usize, row: usize, col: usize) -> u8 {
        self.data[(channel * self.height + row) * self.width + col]
    }

    pub fn pixel(&self, row: usize, col: usize) -> Rgb {
        [self.get(0, row, col), self.get(1, row, col), self.get(2, row, col)]
    }

    pub fn set(&mut self, row: usize, col: usize, color: Rgb) {
        let plane = self.width * self.height;
        let i = row * self.width + col;
        self.data[i] = color[0];
        self.data[plane + i] = color[1];
        self.data[2 * plane + i] = color[2];
    }

    /// Fills every pixel whose centre `(col, row)` lies inside the convex
    /// polygon given in pixel coordinates `(u, v)` (u = column, v = row).
    /// Returns the number of pixels written.
    pub fn fill_convex(&mut self, poly: &[(f64, f64)], color: Rgb) -> usize {
        if poly.len() < 3 {
            return 0;
        }
        let (mut vmin, mut vmax) = (f64::INFINITY, f64::NEG_INFINITY);
        for &(_, v) in poly {
            vmin = vmin.min(v);
            vmax = vmax.max(v);
        }
        let r0 = vmin.ceil().max(0.0);
        let r1 = vmax.floor().min(self.height as f64 - 1.0);
        if r0 > r1 {
            return 0;
        }
        let mut count = 0;
        for r in r0 as usize..=r1 as usize {
            let y = r as f64;
            let (mut umin, mut umax) = (f64::INFINITY, f64::NEG_INFINITY);
            for k in 0..poly.len() {
                let (a, b) = (poly[k], poly[(k + 1) % poly.len()]);
                let (lo, hi) = if a.1 <= b.1 { (a, b) } else { (b, a) };
                if y < lo.1 || y > hi.1 {
                    continue;
                }
                if hi.1 == lo.1 {
                    umin = umin.min(lo.0.min(hi.0));
                    umax = umax.max(lo.0.max(hi.0));
                } else {
                    let u = lo.0 + (y - lo.1) / (hi.1 - lo.1) * (hi.0 - lo.0);
                    umin = umin.min(u);
                    umax = umax.max(u);
                }
            }
            let c0 = umin.ceil().max(0.0);
            let c1 = umax.floor().min(self.width as f64 - 1.0);
            if c0 > c1 {
                continue;
            }
            for c in c0 as usize..=c1 as usize {
                self.set(r, c, color);
                count += 1;
            }
        }
        count
    }

    /// Binary PPM (P6).
    pub fn write_ppm<W: Write>(&self, mut sink: W) -> Result<()> {
        write!(sink, "P6\n{} {}\n255\n", self.width, self.height)?;
        let mut buf = Vec::with_capacity(self.data.len());
        for r in 0..self.height {
            for c in 0..self.width {
                buf.extend_from_slice(&self.pixel(r, c));
            }
        }
        sink.write_all(&buf)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_aligned_square_covers_centres() {
        let mut c = Canvas::new(10, 10);
        let n = c.fill_convex(&[(1.5, 1.5), (4.5, 1.5), (4.5, 3.5), (1.5, 3.5)], [9, 8, 7]);
        // columns 2..=4, rows 2..=3
        assert_eq!(n, 6);
        assert_eq!(c.pixel(2, 2), [9, 8, 7]);
        assert_eq!(c.pixel(1, 2), [0, 0, 0]);
        assert_eq!(c.get(1, 3, 4), 8);
    }

    #[test]
    fn clipping_and_degenerate() {
        let mut c = Canvas::new(4, 4);
        assert_eq!(c.fill_convex(&[(-10.0, -10.0), (10.0, -10.0), (10.0, 10.0), (-10.0, 10.0)], [1, 1, 1]), 16);
        assert_eq!(c.fill_convex(&[(0.0, 0.0), (1.0, 1.0)], [2, 2, 2]), 0);
        assert_eq!(c.fill_convex(&[(20.0, 20.0), (21.0, 20.0), (21.0, 21.0)], [2, 2, 2]), 0);
    }

    #[test]
    fn ppm_header() {
        let c = Canvas::new(3, 2);
        let mut out = Vec::new();
        c.write_ppm(&mut out).unwrap();
        assert!(out.starts_with(b"P6\n3 2\n255\n"));
        assert_eq!(out.len(), 11 + 18);
    }
}
