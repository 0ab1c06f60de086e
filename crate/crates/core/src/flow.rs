//! Dense optical flow by polynomial expansion (Farnebäck).
//!
//! Each frame is locally approximated by a quadratic `xᵀAx + bᵀx + c` fitted
//! with Gaussian applicability weights. The displacement `d` between two
//! expansions satisfies `A d = -½ (b₂ - b₁)`; the per-pixel normal equations
//! are averaged over a Gaussian neighbourhood and solved coarse to fine over
//! an image pyramid.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{Matrix6, Vector6};

use crate::error::{Error, Result};
use crate::frame::{convolve_separable, gaussian_blur, gaussian_kernel, Frame};

/// Diagonal loading for both the polynomial fit and the displacement solve.
const REGULARIZATION: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        FlowField { width, height, u: vec![0.0; width * height], v: vec![0.0; width * height] }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> (f64, f64) {
        let i = y * self.width + x;
        (self.u[i], self.v[i])
    }

    pub fn max_abs(&self) -> f64 {
        self.u.iter().chain(&self.v).fold(0.0f64, |m, x| m.max(x.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowParams {
    pub pyramid_levels: usize,
    pub pyramid_scale: f64,
    pub poly_window: usize,
    pub poly_sigma: f64,
    pub iterations: usize,
    /// Size of the Gaussian neighbourhood over which the displacement
    /// equations are averaged.
    pub average_window: usize,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            pyramid_levels: 3,
            pyramid_scale: 0.5,
            poly_window: 5,
            poly_sigma: 1.1,
            iterations: 3,
            average_window: 15,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        if self.pyramid_levels == 0 || self.iterations == 0 || self.average_window == 0 {
            return Err(Error::invalid("flow params must be positive"));
        }
        if !(self.pyramid_scale > 0.0 && self.pyramid_scale < 1.0) {
            return Err(Error::invalid("pyramid_scale must lie in (0, 1)"));
        }
        if self.poly_window < 5 || self.poly_window % 2 == 0 {
            return Err(Error::invalid("poly_window must be odd and >= 5"));
        }
        if !(self.poly_sigma > 0.0) {
            return Err(Error::invalid("poly_sigma must be positive"));
        }
        Ok(())
    }
}

/// Per-pixel quadratic expansion: `a = [a11, a12, a22]`, `b = [bx, by]`.
struct Expansion {
    width: usize,
    a11: Vec<f64>,
    a12: Vec<f64>,
    a22: Vec<f64>,
    bx: Vec<f64>,
    by: Vec<f64>,
}

fn poly_expand(frame: &Frame, window: usize, sigma: f64) -> Expansion {
    let r = (window / 2) as isize;
    let offsets: Vec<f64> = (-r..=r).map(|i| i as f64).collect();
    let g: Vec<f64> = offsets.iter().map(|x| (-x * x / (2.0 * sigma * sigma)).exp()).collect();
    let gx: Vec<f64> = g.iter().zip(&offsets).map(|(w, x)| w * x).collect();
    let gxx: Vec<f64> = g.iter().zip(&offsets).map(|(w, x)| w * x * x).collect();

    // Basis order: 1, x, y, x², y², xy.
    let mut gram = Matrix6::<f64>::zeros();
    for (j, &y) in offsets.iter().enumerate() {
        for (i, &x) in offsets.iter().enumerate() {
            let w = g[i] * g[j];
            let basis = Vector6::new(1.0, x, y, x * x, y * y, x * y);
            gram += w * basis * basis.transpose();
        }
    }
    let inv = (gram + Matrix6::identity() * REGULARIZATION)
        .try_inverse()
        .expect("regularized polynomial gram is invertible");

    let m1 = convolve_separable(frame, &g, &g);
    let mx = convolve_separable(frame, &gx, &g);
    let my = convolve_separable(frame, &g, &gx);
    let mxx = convolve_separable(frame, &gxx, &g);
    let myy = convolve_separable(frame, &g, &gxx);
    let mxy = convolve_separable(frame, &gx, &gx);

    let n = frame.data.len();
    let mut e = Expansion {
        width: frame.width,
        a11: vec![0.0; n],
        a12: vec![0.0; n],
        a22: vec![0.0; n],
        bx: vec![0.0; n],
        by: vec![0.0; n],
    };
    for i in 0..n {
        let m = Vector6::new(m1.data[i], mx.data[i], my.data[i], mxx.data[i], myy.data[i], mxy.data[i]);
        let r = inv * m;
        e.bx[i] = r[1];
        e.by[i] = r[2];
        e.a11[i] = r[3];
        e.a22[i] = r[4];
        e.a12[i] = r[5] / 2.0;
    }
    e
}

/// Bilinear lookup position: the four corner indices and fractions.
#[derive(Clone, Copy)]
struct Tap {
    i00: usize,
    i01: usize,
    i10: usize,
    i11: usize,
    fx: f64,
    fy: f64,
}

impl Tap {
    fn new(width: usize, height: usize, x: f64, y: f64) -> Self {
        let x = x.clamp(0.0, (width - 1) as f64);
        let y = y.clamp(0.0, (height - 1) as f64);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(width - 1);
        let y1 = (y0 + 1).min(height - 1);
        Tap { i00: y0 * width + x0, i01: y0 * width + x1, i10: y1 * width + x0, i11: y1 * width + x1, fx: x - x0 as f64, fy: y - y0 as f64 }
    }

    #[inline]
    fn get(&self, field: &[f64]) -> f64 {
        let top = field[self.i00] * (1.0 - self.fx) + field[self.i01] * self.fx;
        let bot = field[self.i10] * (1.0 - self.fx) + field[self.i11] * self.fx;
        top * (1.0 - self.fy) + bot * self.fy
    }
}

fn sample(field: &[f64], width: usize, height: usize, x: f64, y: f64) -> f64 {
    Tap::new(width, height, x, y).get(field)
}

fn refine(e1: &Expansion, e2: &Expansion, height: usize, flow: &mut FlowField, params: &FlowParams) {
    let w = e1.width;
    let n = w * height;
    let sigma = 0.15 * params.average_window as f64;
    let radius = params.average_window / 2;
    let kernel = gaussian_kernel(sigma, radius.max(1));
    for _ in 0..params.iterations {
        let mut g11 = Frame::new(w, height);
        let mut g12 = Frame::new(w, height);
        let mut g22 = Frame::new(w, height);
        let mut h1 = Frame::new(w, height);
        let mut h2 = Frame::new(w, height);
        for y in 0..height {
            for x in 0..w {
                let i = y * w + x;
                let (du, dv) = (flow.u[i], flow.v[i]);
                let sx = x as f64 + du;
                let sy = y as f64 + dv;
                let tap = Tap::new(w, height, sx, sy);
                let a11 = 0.5 * (e1.a11[i] + tap.get(&e2.a11));
                let a12 = 0.5 * (e1.a12[i] + tap.get(&e2.a12));
                let a22 = 0.5 * (e1.a22[i] + tap.get(&e2.a22));
                let dbx = -0.5 * (tap.get(&e2.bx) - e1.bx[i]) + a11 * du + a12 * dv;
                let dby = -0.5 * (tap.get(&e2.by) - e1.by[i]) + a12 * du + a22 * dv;
                g11.data[i] = a11 * a11 + a12 * a12;
                g12.data[i] = a11 * a12 + a12 * a22;
                g22.data[i] = a12 * a12 + a22 * a22;
                h1.data[i] = a11 * dbx + a12 * dby;
                h2.data[i] = a12 * dbx + a22 * dby;
            }
        }
        let g11 = convolve_separable(&g11, &kernel, &kernel);
        let g12 = convolve_separable(&g12, &kernel, &kernel);
        let g22 = convolve_separable(&g22, &kernel, &kernel);
        let h1 = convolve_separable(&h1, &kernel, &kernel);
        let h2 = convolve_separable(&h2, &kernel, &kernel);
        for i in 0..n {
            let a = g11.data[i] + REGULARIZATION;
            let b = g12.data[i];
            let d = g22.data[i] + REGULARIZATION;
            let det = a * d - b * b;
            flow.u[i] = (d * h1.data[i] - b * h2.data[i]) / det;
            flow.v[i] = (a * h2.data[i] - b * h1.data[i]) / det;
        }
    }
}

fn resize(frame: &Frame, width: usize, height: usize) -> Frame {
    let sx = frame.width as f64 / width as f64;
    let sy = frame.height as f64 / height as f64;
    Frame::from_fn(width, height, |x, y| {
        frame.bilinear((x as f64 + 0.5) * sx - 0.5, (y as f64 + 0.5) * sy - 0.5)
    })
}

fn pyramid(frame: &Frame, params: &FlowParams) -> Vec<Frame> {
    let mut levels = vec![frame.clone()];
    let min_side = 2 * params.poly_window;
    for _ in 1..params.pyramid_levels {
        let prev = levels.last().unwrap();
        let w = (prev.width as f64 * params.pyramid_scale).round() as usize;
        let h = (prev.height as f64 * params.pyramid_scale).round() as usize;
        if w < min_side || h < min_side {
            break;
        }
        let blurred = gaussian_blur(prev, 0.5 / params.pyramid_scale);
        levels.push(resize(&blurred, w, h));
    }
    levels
}

fn upsample(flow: &FlowField, width: usize, height: usize) -> FlowField {
    let sx = width as f64 / flow.width as f64;
    let sy = height as f64 / flow.height as f64;
    let mut out = FlowField::zeros(width, height);
    for y in 0..height {
        for x in 0..width {
            let fx = (x as f64 + 0.5) / sx - 0.5;
            let fy = (y as f64 + 0.5) / sy - 0.5;
            let i = y * width + x;
            out.u[i] = sample(&flow.u, flow.width, flow.height, fx, fy) * sx;
            out.v[i] = sample(&flow.v, flow.width, flow.height, fx, fy) * sy;
        }
    }
    out
}

/// Copies the nearest interior flow vector into a border of `r` pixels.
fn replicate_border(flow: &mut FlowField, r: usize) {
    let (w, h) = (flow.width, flow.height);
    if w <= 2 * r || h <= 2 * r {
        return;
    }
    for y in 0..h {
        for x in 0..w {
            let cx = x.clamp(r, w - 1 - r);
            let cy = y.clamp(r, h - 1 - r);
            if cx != x || cy != y {
                let (src, dst) = (cy * w + cx, y * w + x);
                flow.u[dst] = flow.u[src];
                flow.v[dst] = flow.v[src];
            }
        }
    }
}

/// Dense flow mapping `prev` to `next`: `next(x + d(x)) ≈ prev(x)`.
/// Pyramid levels of one frame with their polynomial expansions, reusable
/// across consecutive pairs.
struct Prepared {
    levels: Vec<(Frame, Expansion)>,
}

fn prepare(frame: &Frame, params: &FlowParams) -> Prepared {
    let levels = pyramid(frame, params)
        .into_iter()
        .map(|f| {
            let e = poly_expand(&f, params.poly_window, params.poly_sigma);
            (f, e)
        })
        .collect();
    Prepared { levels }
}

fn check_pair(prev: &Frame, next: &Frame, params: &FlowParams) -> Result<()> {
    params.validate()?;
    if prev.dims() != next.dims() {
        return Err(Error::SizeMismatch(prev.dims(), next.dims()));
    }
    if prev.width < 16 || prev.height < 16 {
        return Err(Error::invalid(format!("frames must be at least 16x16, got {:?}", prev.dims())));
    }
    Ok(())
}

fn flow_prepared(p1: &Prepared, p2: &Prepared, params: &FlowParams) -> FlowField {
    let mut flow: Option<FlowField> = None;
    for ((f1, e1), (_, e2)) in p1.levels.iter().zip(&p2.levels).rev() {
        let mut current = match &flow {
            Some(coarse) => upsample(coarse, f1.width, f1.height),
            None => FlowField::zeros(f1.width, f1.height),
        };
        refine(e1, e2, f1.height, &mut current, params);
        flow = Some(current);
    }
    let mut flow = flow.expect("pyramid has at least one level");
    replicate_border(&mut flow, params.poly_window / 2);
    flow
}

pub fn farneback_flow(prev: &Frame, next: &Frame, params: &FlowParams) -> Result<FlowField> {
    check_pair(prev, next, params)?;
    Ok(flow_prepared(&prepare(prev, params), &prepare(next, params), params))
}

/// Flow between every consecutive pair; each frame is expanded once.
pub fn flow_sequence(frames: &[Frame], params: &FlowParams) -> Result<Vec<FlowField>> {
    for p in frames.windows(2) {
        check_pair(&p[0], &p[1], params)?;
    }
    let mut out = Vec::with_capacity(frames.len().saturating_sub(1));
    let mut prev = match frames.first() {
        Some(f) => prepare(f, params),
        None => return Ok(out),
    };
    for f in &frames[1..] {
        let next = prepare(f, params);
        out.push(flow_prepared(&prev, &next, params));
        prev = next;
    }
    Ok(out)
}

const FLOW_MAGIC: &[u8; 4] = b"FLW1";

/// Serializes flows as consecutive `FLW1` records: magic, width and height
/// (u32 LE), then `u` and `v` as f32 LE in row-major order.
pub fn write_flows(path: &Path, flows: &[FlowField]) -> Result<()> {
    let mut out = Vec::new();
    for f in flows {
        out.extend_from_slice(FLOW_MAGIC);
        out.extend_from_slice(&(f.width as u32).to_le_bytes());
        out.extend_from_slice(&(f.height as u32).to_le_bytes());
        for x in f.u.iter().chain(&f.v) {
            out.extend_from_slice(&(*x as f32).to_le_bytes());
        }
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))
}

pub fn read_flows(path: &Path) -> Result<Vec<FlowField>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let corrupt = |m: &str| Error::Decode { path: path.to_path_buf(), msg: m.to_string() };
    let mut pos = 0;
    let mut flows = Vec::new();
    while pos < bytes.len() {
        if bytes.len() < pos + 12 || &bytes[pos..pos + 4] != FLOW_MAGIC {
            return Err(corrupt("bad FLW1 header"));
        }
        let w = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let h = u32::from_le_bytes(bytes[pos + 8..pos + 12].try_into().unwrap()) as usize;
        pos += 12;
        let n = w * h;
        if bytes.len() < pos + 8 * n {
            return Err(corrupt("truncated FLW1 record"));
        }
        let read = |start: usize| -> Vec<f64> {
            bytes[start..start + 4 * n]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect()
        };
        let u = read(pos);
        let v = read(pos + 4 * n);
        pos += 8 * n;
        flows.push(FlowField { width: w, height: h, u, v });
    }
    Ok(flows)
}
