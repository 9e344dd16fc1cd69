//! Two-stream network: strided convolutions over the raster, a small MLP over
//! the vector, late fusion, and one linear layer producing every head.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Outputs: steer mean, steer log-std, accel mean, accel log-std, 3 signal logits, value.
pub const HEAD_OUT: usize = 8;
pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 1.0;
const KERNEL: usize = 4;
const STRIDE: usize = 2;
const PAD: usize = 1;
const HEAD_INIT_SCALE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetConfig {
    pub raster_px: usize,
    pub vector_dim: usize,
    pub channels: [usize; 3],
    pub raster_embed: usize,
    pub vec_hidden: usize,
    pub fusion: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self { raster_px: 128, vector_dim: 76, channels: [16, 32, 64], raster_embed: 128, vec_hidden: 64, fusion: 128 }
    }
}

impl NetConfig {
    /// The miniature network used for gradient checks.
    pub fn micro() -> Self {
        Self { raster_px: 8, vector_dim: 4, channels: [2, 3, 4], raster_embed: 5, vec_hidden: 4, fusion: 6 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.raster_px < 8 || !self.raster_px.is_multiple_of(8) {
            return Err(Error::Shape(format!("raster size {} is not a multiple of 8", self.raster_px)));
        }
        if self.vector_dim == 0 || self.channels.contains(&0) || self.raster_embed == 0 || self.vec_hidden == 0 || self.fusion == 0 {
            return Err(Error::Shape("layer widths must be positive".into()));
        }
        Ok(())
    }

    /// Spatial side after each convolution.
    pub fn conv_sides(&self) -> [usize; 3] {
        [self.raster_px / 2, self.raster_px / 4, self.raster_px / 8]
    }

    pub fn flat_conv(&self) -> usize {
        let s = self.raster_px / 8;
        self.channels[2] * s * s
    }

    /// Named tensor shapes in storage order.
    pub fn shapes(&self) -> Vec<(String, Vec<usize>)> {
        let [c1, c2, c3] = self.channels;
        let k = KERNEL;
        vec![
            ("conv1.w".into(), vec![c1, 3, k, k]),
            ("conv1.b".into(), vec![c1]),
            ("conv2.w".into(), vec![c2, c1, k, k]),
            ("conv2.b".into(), vec![c2]),
            ("conv3.w".into(), vec![c3, c2, k, k]),
            ("conv3.b".into(), vec![c3]),
            ("embed.w".into(), vec![self.raster_embed, self.flat_conv()]),
            ("embed.b".into(), vec![self.raster_embed]),
            ("vec1.w".into(), vec![self.vec_hidden, self.vector_dim]),
            ("vec1.b".into(), vec![self.vec_hidden]),
            ("vec2.w".into(), vec![self.vec_hidden, self.vec_hidden]),
            ("vec2.b".into(), vec![self.vec_hidden]),
            ("fuse.w".into(), vec![self.fusion, self.raster_embed + self.vec_hidden]),
            ("fuse.b".into(), vec![self.fusion]),
            ("head.w".into(), vec![HEAD_OUT, self.fusion]),
            ("head.b".into(), vec![HEAD_OUT]),
        ]
    }

    pub fn param_count(&self) -> usize {
        self.shapes().iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }
}

/// Offsets of every tensor in the flat parameter array.
#[derive(Debug, Clone, Copy)]
struct Offsets {
    conv: [(usize, usize); 3],
    embed: (usize, usize),
    vec1: (usize, usize),
    vec2: (usize, usize),
    fuse: (usize, usize),
    head: (usize, usize),
}

impl Offsets {
    fn of(cfg: &NetConfig) -> Self {
        let mut at = 0;
        let mut o = Vec::new();
        for (_, s) in cfg.shapes() {
            o.push(at);
            at += s.iter().product::<usize>();
        }
        Self {
            conv: [(o[0], o[1]), (o[2], o[3]), (o[4], o[5])],
            embed: (o[6], o[7]),
            vec1: (o[8], o[9]),
            vec2: (o[10], o[11]),
            fuse: (o[12], o[13]),
            head: (o[14], o[15]),
        }
    }
}

/// All weights, stored flat in f64 but always representable in f32.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub config: NetConfig,
    pub data: Vec<f64>,
}

impl PolicyParams {
    pub fn zeros(config: NetConfig) -> Self {
        Self { data: vec![0.0; config.param_count()], config }
    }

    /// He-scaled Gaussian weights, zero biases, head weights scaled down.
    pub fn init<R: Rng + ?Sized>(config: NetConfig, rng: &mut R) -> Self {
        let mut data = Vec::with_capacity(config.param_count());
        for (name, shape) in config.shapes() {
            let n: usize = shape.iter().product();
            if name.ends_with(".b") {
                data.extend(std::iter::repeat_n(0.0, n));
                continue;
            }
            let fan_in: usize = shape[1..].iter().product();
            let mut std = (2.0 / fan_in as f64).sqrt();
            if name.starts_with("head") {
                std *= HEAD_INIT_SCALE;
            }
            let normal = Normal::new(0.0, std).unwrap();
            data.extend((0..n).map(|_| normal.sample(rng)));
        }
        let mut p = Self { config, data };
        p.quantize();
        p
    }

    /// Rounds every parameter to the nearest f32 so snapshots round-trip exactly.
    pub fn quantize(&mut self) {
        for x in &mut self.data {
            *x = *x as f32 as f64;
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    raster: Vec<f64>,
    conv: [Vec<f64>; 3],
    embed: Vec<f64>,
    vector: Vec<f64>,
    vec1: Vec<f64>,
    vec2: Vec<f64>,
    fused: Vec<f64>,
    /// Head outputs before the log-std clamp.
    pub raw_out: [f64; HEAD_OUT],
}

/// Distribution parameters and value for one observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistParams {
    pub steer_mean: f64,
    pub steer_log_std: f64,
    pub accel_mean: f64,
    pub accel_log_std: f64,
    pub logits: [f64; 3],
    pub value: f64,
}

impl DistParams {
    fn from_raw(o: &[f64; HEAD_OUT]) -> Self {
        Self {
            steer_mean: o[0],
            steer_log_std: o[1].clamp(LOG_STD_MIN, LOG_STD_MAX),
            accel_mean: o[2],
            accel_log_std: o[3].clamp(LOG_STD_MIN, LOG_STD_MAX),
            logits: [o[4], o[5], o[6]],
            value: o[7],
        }
    }
}

/// Gradient of a scalar with respect to each entry of [`DistParams`], in head order.
pub type HeadGrad = [f64; HEAD_OUT];

fn relu_inplace(x: &mut [f64]) {
    for v in x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Row-major matrix view: `(data, row stride, column stride)`.
type Mat<'a> = (&'a [f64], isize, isize);

/// `c ← a·b + beta·c` for an `m×k` by `k×n` product into row-major `c` (`m×n`).
fn gemm(m: usize, k: usize, n: usize, a: Mat, b: Mat, beta: f64, c: &mut [f64]) {
    let last = |rows: usize, cols: usize, rs: isize, cs: isize| (rows - 1) as isize * rs + (cols - 1) as isize * cs;
    if m == 0 || n == 0 {
        return;
    }
    assert!(c.len() >= m * n);
    if k > 0 {
        assert!(last(m, k, a.1, a.2) < a.0.len() as isize && last(k, n, b.1, b.2) < b.0.len() as isize);
    }
    // SAFETY: every index the kernel touches was bounds-checked above; `c`
    // does not alias `a` or `b` since it is borrowed mutably.
    unsafe {
        matrixmultiply::dgemm(m, k, n, 1.0, a.0.as_ptr(), a.1, a.2, b.0.as_ptr(), b.1, b.2, beta, c.as_mut_ptr(), n as isize, 1);
    }
}

fn linear(w: &[f64], b: &[f64], x: &[f64], out_n: usize) -> Vec<f64> {
    let in_n = x.len();
    let mut out = b[..out_n].to_vec();
    gemm(out_n, in_n, 1, (w, in_n as isize, 1), (x, 1, 1), 1.0, &mut out);
    out
}

/// `dy` is the gradient at the linear output. Accumulates into `dw`/`db`
/// and returns the gradient at `x` when asked.
fn linear_backward(w: &[f64], x: &[f64], dy: &[f64], dw: &mut [f64], db: &mut [f64], want_dx: bool) -> Vec<f64> {
    let in_n = x.len();
    let mut dx = if want_dx { vec![0.0; in_n] } else { Vec::new() };
    for (o, &g) in dy.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        db[o] += g;
        let row = &mut dw[o * in_n..(o + 1) * in_n];
        for (r, &xi) in row.iter_mut().zip(x) {
            *r += g * xi;
        }
        if want_dx {
            for (d, &wi) in dx.iter_mut().zip(&w[o * in_n..(o + 1) * in_n]) {
                *d += g * wi;
            }
        }
    }
    dx
}

/// Valid output columns `ox` for kernel column `kx`: `ix = 2·ox + kx − 1` in `[0, side)`.
fn ox_range(kx: usize, side: usize, os: usize) -> (usize, usize) {
    let ox0 = if kx < PAD { 1 } else { 0 };
    let ox1 = if side + PAD > kx { ((side + PAD - kx - 1) / STRIDE + 1).min(os) } else { 0 };
    (ox0, ox1)
}

/// Patch matrix: row `(ic, ky, kx)`, column `(oy, ox)`, zero where the kernel hangs over the edge.
fn im2col(input: &[f64], in_c: usize, side: usize) -> Vec<f64> {
    let os = side / STRIDE;
    let n = os * os;
    let mut col = vec![0.0; in_c * KERNEL * KERNEL * n];
    for ic in 0..in_c {
        let src = &input[ic * side * side..(ic + 1) * side * side];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &mut col[((ic * KERNEL + ky) * KERNEL + kx) * n..][..n];
                let (ox0, ox1) = ox_range(kx, side, os);
                for oy in 0..os {
                    let iy = (oy * STRIDE + ky) as isize - PAD as isize;
                    if iy < 0 || iy >= side as isize {
                        continue;
                    }
                    let srow = &src[iy as usize * side..][..side];
                    for ox in ox0..ox1 {
                        row[oy * os + ox] = srow[ox * STRIDE + kx - PAD];
                    }
                }
            }
        }
    }
    col
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the input grid.
fn col2im(col: &[f64], in_c: usize, side: usize) -> Vec<f64> {
    let os = side / STRIDE;
    let n = os * os;
    let mut dx = vec![0.0; in_c * side * side];
    for ic in 0..in_c {
        let dst = &mut dx[ic * side * side..(ic + 1) * side * side];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &col[((ic * KERNEL + ky) * KERNEL + kx) * n..][..n];
                let (ox0, ox1) = ox_range(kx, side, os);
                for oy in 0..os {
                    let iy = (oy * STRIDE + ky) as isize - PAD as isize;
                    if iy < 0 || iy >= side as isize {
                        continue;
                    }
                    let drow = &mut dst[iy as usize * side..][..side];
                    for ox in ox0..ox1 {
                        drow[ox * STRIDE + kx - PAD] += row[oy * os + ox];
                    }
                }
            }
        }
    }
    dx
}

/// 4×4 kernel, stride 2, padding 1: side `n` → `n / 2`.
fn conv_forward(input: &[f64], in_c: usize, side: usize, w: &[f64], b: &[f64], out_c: usize) -> Vec<f64> {
    let os = side / STRIDE;
    let (k, n) = (in_c * KERNEL * KERNEL, os * os);
    let mut out = vec![0.0; out_c * n];
    for (plane, &bias) in out.chunks_mut(n.max(1)).zip(b) {
        plane.fill(bias);
    }
    let col = im2col(input, in_c, side);
    gemm(out_c, k, n, (w, k as isize, 1), (&col, n as isize, 1), 1.0, &mut out);
    out
}

/// Backward of [`conv_forward`] given the gradient at its output.
#[allow(clippy::too_many_arguments)]
fn conv_backward(
    input: &[f64],
    in_c: usize,
    side: usize,
    w: &[f64],
    out_c: usize,
    dout: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    want_dx: bool,
) -> Vec<f64> {
    let os = side / STRIDE;
    let (k, n) = (in_c * KERNEL * KERNEL, os * os);
    for (oc, g) in db.iter_mut().enumerate().take(out_c) {
        *g += dout[oc * n..(oc + 1) * n].iter().sum::<f64>();
    }
    let col = im2col(input, in_c, side);
    // dW += dout · colᵀ
    gemm(out_c, n, k, (dout, n as isize, 1), (&col, 1, n as isize), 1.0, dw);
    if !want_dx {
        return Vec::new();
    }
    // dcol = Wᵀ · dout
    let mut dcol = vec![0.0; k * n];
    gemm(k, out_c, n, (w, 1, k as isize), (dout, n as isize, 1), 0.0, &mut dcol);
    col2im(&dcol, in_c, side)
}

fn relu_mask(grad: &mut [f64], activation: &[f64]) {
    for (g, &a) in grad.iter_mut().zip(activation) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Evaluates the network. `raster` is channel-major with values in [0, 1].
pub fn forward(params: &PolicyParams, raster: &[f64], vector: &[f64]) -> Result<(DistParams, ForwardCache)> {
    let cfg = &params.config;
    let n = cfg.raster_px;
    if raster.len() != 3 * n * n {
        return Err(Error::Shape(format!("raster has {} values, network expects {}", raster.len(), 3 * n * n)));
    }
    if vector.len() != cfg.vector_dim {
        return Err(Error::Shape(format!("vector has {} entries, network expects {}", vector.len(), cfg.vector_dim)));
    }
    let off = Offsets::of(cfg);
    let p = &params.data;
    let seg = |(w, b): (usize, usize), wn: usize, bn: usize| (&p[w..w + wn], &p[b..b + bn]);

    let mut conv: [Vec<f64>; 3] = Default::default();
    let mut in_c = 3;
    let mut side = n;
    for l in 0..3 {
        let oc = cfg.channels[l];
        let (w, b) = seg(off.conv[l], oc * in_c * KERNEL * KERNEL, oc);
        let input = if l == 0 { raster } else { &conv[l - 1] };
        let mut out = conv_forward(input, in_c, side, w, b, oc);
        relu_inplace(&mut out);
        conv[l] = out;
        in_c = oc;
        side /= 2;
    }
    let flat = cfg.flat_conv();
    let (w, b) = seg(off.embed, cfg.raster_embed * flat, cfg.raster_embed);
    let mut embed = linear(w, b, &conv[2], cfg.raster_embed);
    relu_inplace(&mut embed);

    let h = cfg.vec_hidden;
    let (w, b) = seg(off.vec1, h * cfg.vector_dim, h);
    let mut vec1 = linear(w, b, vector, h);
    relu_inplace(&mut vec1);
    let (w, b) = seg(off.vec2, h * h, h);
    let mut vec2 = linear(w, b, &vec1, h);
    relu_inplace(&mut vec2);

    let mut cat = embed.clone();
    cat.extend_from_slice(&vec2);
    let (w, b) = seg(off.fuse, cfg.fusion * cat.len(), cfg.fusion);
    let mut fused = linear(w, b, &cat, cfg.fusion);
    relu_inplace(&mut fused);

    let (w, b) = seg(off.head, HEAD_OUT * cfg.fusion, HEAD_OUT);
    let out = linear(w, b, &fused, HEAD_OUT);
    let mut raw_out = [0.0; HEAD_OUT];
    raw_out.copy_from_slice(&out);

    let dist = DistParams::from_raw(&raw_out);
    let cache = ForwardCache {
        raster: raster.to_vec(),
        conv,
        embed,
        vector: vector.to_vec(),
        vec1,
        vec2,
        fused,
        raw_out,
    };
    Ok((dist, cache))
}

/// Accumulates into `grads` the parameter gradient of a scalar whose
/// gradient with respect to the distribution parameters is `d_dist`.
pub fn backward(params: &PolicyParams, cache: &ForwardCache, d_dist: &HeadGrad, grads: &mut [f64]) {
    let cfg = &params.config;
    let off = Offsets::of(cfg);
    let p = &params.data;

    let mut d_out = *d_dist;
    for i in [1, 3] {
        let r = cache.raw_out[i];
        if !(LOG_STD_MIN..=LOG_STD_MAX).contains(&r) {
            d_out[i] = 0.0;
        }
    }

    // Splits `grads` into the (weight, bias) gradient slices of one layer.
    fn wb(grads: &mut [f64], (w, b): (usize, usize), wn: usize, bn: usize) -> (&mut [f64], &mut [f64]) {
        let (lo, hi) = grads.split_at_mut(b);
        (&mut lo[w..w + wn], &mut hi[..bn])
    }

    let fusion = cfg.fusion;
    let (dw, db) = wb(grads, off.head, HEAD_OUT * fusion, HEAD_OUT);
    let mut d_fused = linear_backward(&p[off.head.0..off.head.0 + HEAD_OUT * fusion], &cache.fused, &d_out, dw, db, true);
    relu_mask(&mut d_fused, &cache.fused);

    let mut cat = cache.embed.clone();
    cat.extend_from_slice(&cache.vec2);
    let (dw, db) = wb(grads, off.fuse, fusion * cat.len(), fusion);
    let d_cat = linear_backward(&p[off.fuse.0..off.fuse.0 + fusion * cat.len()], &cat, &d_fused, dw, db, true);
    let (d_embed, d_vec2) = d_cat.split_at(cfg.raster_embed);

    let h = cfg.vec_hidden;
    let mut d_vec2 = d_vec2.to_vec();
    relu_mask(&mut d_vec2, &cache.vec2);
    let (dw, db) = wb(grads, off.vec2, h * h, h);
    let mut d_vec1 = linear_backward(&p[off.vec2.0..off.vec2.0 + h * h], &cache.vec1, &d_vec2, dw, db, true);
    relu_mask(&mut d_vec1, &cache.vec1);
    let (dw, db) = wb(grads, off.vec1, h * cfg.vector_dim, h);
    linear_backward(&p[off.vec1.0..off.vec1.0 + h * cfg.vector_dim], &cache.vector, &d_vec1, dw, db, false);

    let mut d_embed = d_embed.to_vec();
    relu_mask(&mut d_embed, &cache.embed);
    let flat = cfg.flat_conv();
    let (dw, db) = wb(grads, off.embed, cfg.raster_embed * flat, cfg.raster_embed);
    let mut d_act = linear_backward(&p[off.embed.0..off.embed.0 + cfg.raster_embed * flat], &cache.conv[2], &d_embed, dw, db, true);

    let sides = [cfg.raster_px, cfg.raster_px / 2, cfg.raster_px / 4];
    let in_cs = [3, cfg.channels[0], cfg.channels[1]];
    for l in (0..3).rev() {
        relu_mask(&mut d_act, &cache.conv[l]);
        let oc = cfg.channels[l];
        let wn = oc * in_cs[l] * KERNEL * KERNEL;
        let input = if l == 0 { &cache.raster } else { &cache.conv[l - 1] };
        let w = &p[off.conv[l].0..off.conv[l].0 + wn];
        let (dw, db) = wb(grads, off.conv[l], wn, oc);
        d_act = conv_backward(input, in_cs[l], sides[l], w, oc, &d_act, dw, db, l > 0);
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    /// Direct definition of the strided convolution for comparison.
    fn conv_reference(input: &[f64], in_c: usize, side: usize, w: &[f64], b: &[f64], out_c: usize) -> Vec<f64> {
        let os = side / 2;
        let mut out = vec![0.0; out_c * os * os];
        for oc in 0..out_c {
            for oy in 0..os {
                for ox in 0..os {
                    let mut acc = b[oc];
                    for ic in 0..in_c {
                        for ky in 0..4 {
                            for kx in 0..4 {
                                let iy = (2 * oy + ky) as isize - 1;
                                let ix = (2 * ox + kx) as isize - 1;
                                if iy >= 0 && ix >= 0 && (iy as usize) < side && (ix as usize) < side {
                                    acc += w[((oc * in_c + ic) * 4 + ky) * 4 + kx]
                                        * input[(ic * side + iy as usize) * side + ix as usize];
                                }
                            }
                        }
                    }
                    out[(oc * os + oy) * os + ox] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // Side 2 is narrower than the kernel reach.
        for side in [8, 2] {
            let (in_c, out_c) = (3, 2);
            let input: Vec<f64> = (0..in_c * side * side).map(|_| rng.random_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..out_c * in_c * 16).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b = vec![0.3, -0.2];
            let a = conv_forward(&input, in_c, side, &w, &b, out_c);
            let r = conv_reference(&input, in_c, side, &w, &b, out_c);
            for (x, y) in a.iter().zip(&r) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn default_shapes() {
        let c = NetConfig::default();
        assert_eq!(c.conv_sides(), [64, 32, 16]);
        assert_eq!(c.flat_conv(), 16 * 16 * 64);
        let fuse = c.shapes().into_iter().find(|(n, _)| n == "fuse.w").unwrap().1;
        assert_eq!(fuse, vec![128, 192]);
    }

    #[test]
    fn zero_params_give_zero_heads() {
        let c = NetConfig::micro();
        let p = PolicyParams::zeros(c);
        let (d, _) = forward(&p, &vec![0.5; 3 * 64], &[1.0; 4]).unwrap();
        assert_eq!((d.steer_mean, d.accel_mean, d.value), (0.0, 0.0, 0.0));
        assert_eq!(d.logits, [0.0; 3]);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let p = PolicyParams::zeros(NetConfig::micro());
        assert!(matches!(forward(&p, &[0.0; 10], &[0.0; 4]), Err(Error::Shape(_))));
        assert!(matches!(forward(&p, &vec![0.0; 192], &[0.0; 3]), Err(Error::Shape(_))));
    }

    #[test]
    fn init_is_f32_exact_and_seeded() {
        let c = NetConfig::micro();
        let a = PolicyParams::init(c, &mut ChaCha8Rng::seed_from_u64(1));
        let b = PolicyParams::init(c, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a, b);
        assert!(a.data.iter().all(|&x| x == x as f32 as f64));
    }
}
