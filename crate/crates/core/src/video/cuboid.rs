//! Spatio-temporal interest points with a separable quadrature-Gabor
//! detector and flattened-gradient cuboid descriptors.
//!
//! Response: `R = (I∗g∗h_ev)² + (I∗g∗h_od)²` where `g` is a 2-D spatial
//! Gaussian of scale σ and `h_ev(t) = −cos(ωt)·e^{−t²/τ²}`,
//! `h_od(t) = −sin(ωt)·e^{−t²/τ²}` with `ω = 4/τ` rad/frame. The even filter
//! has its mean removed so a constant signal yields exactly zero response.

use crate::error::{Error, Result};
use crate::frame::{convolve_separable, gaussian_kernel, Frame};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CuboidParams {
    pub sigma: f64,
    pub tau: f64,
    /// Threshold on the response normalized by its per-video maximum.
    pub threshold: f64,
    /// Strongest points kept per video.
    pub max_points: usize,
    /// Cuboid extent `(width, height, frames)`.
    pub extent: (usize, usize, usize),
    /// Sampling stride inside the cuboid.
    pub stride: usize,
}

impl Default for CuboidParams {
    fn default() -> Self {
        CuboidParams {
            sigma: 2.0,
            tau: 3.0,
            threshold: 2e-4,
            max_points: 60,
            extent: (13, 13, 19),
            stride: 3,
        }
    }
}

impl CuboidParams {
    pub fn min_frames(&self) -> usize {
        2 * (3.0 * self.tau).ceil() as usize
    }

    fn samples(len: usize, stride: usize) -> Vec<isize> {
        let half = (len / 2) as isize;
        (-half..=half).step_by(stride.max(1)).collect()
    }

    pub fn descriptor_dim(&self) -> usize {
        let (w, h, t) = self.extent;
        3 * Self::samples(w, self.stride).len()
            * Self::samples(h, self.stride).len()
            * Self::samples(t, self.stride).len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterestPoint {
    pub x: usize,
    pub y: usize,
    pub t: usize,
    pub response: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CuboidDescriptorSet {
    pub points: Vec<InterestPoint>,
    pub descriptors: Vec<Vec<f64>>,
}

/// `(h_ev, h_od)` sampled on `−r..=r` with `r = ⌈3τ⌉`.
pub fn temporal_gabor(tau: f64) -> (Vec<f64>, Vec<f64>) {
    let r = (3.0 * tau).ceil() as isize;
    let omega = 4.0 / tau;
    let env = |t: f64| (-t * t / (tau * tau)).exp();
    let mut ev: Vec<f64> = (-r..=r).map(|t| -(omega * t as f64).cos() * env(t as f64)).collect();
    let od: Vec<f64> = (-r..=r).map(|t| -(omega * t as f64).sin() * env(t as f64)).collect();
    let mean = ev.iter().sum::<f64>() / ev.len() as f64;
    ev.iter_mut().for_each(|x| *x -= mean);
    (ev, od)
}

fn spatial_kernel(sigma: f64) -> Vec<f64> {
    gaussian_kernel(sigma, (3.0 * sigma).ceil().max(1.0) as usize)
}

fn smooth(frames: &[Frame], sigma: f64) -> Vec<Frame> {
    let k = spatial_kernel(sigma);
    frames.iter().map(|f| convolve_separable(f, &k, &k)).collect()
}

/// Raw (unnormalized) detector response per frame.
pub fn detector_response(frames: &[Frame], sigma: f64, tau: f64) -> Vec<Frame> {
    let smoothed = smooth(frames, sigma);
    let (ev, od) = temporal_gabor(tau);
    let r = (ev.len() / 2) as isize;
    let n = frames.len() as isize;
    let (w, h) = frames[0].dims();
    (0..n)
        .map(|t| {
            let mut out = Frame::new(w, h);
            for i in 0..w * h {
                let (mut a, mut b) = (0.0, 0.0);
                for (k, (e, o)) in ev.iter().zip(&od).enumerate() {
                    let src = (t + k as isize - r).clamp(0, n - 1) as usize;
                    let x = smoothed[src].data[i];
                    a += e * x;
                    b += o * x;
                }
                out.data[i] = a * a + b * b;
            }
            out
        })
        .collect()
}

fn local_maxima(resp: &[Frame], threshold: f64) -> Vec<InterestPoint> {
    let n = resp.len();
    let (w, h) = resp[0].dims();
    let mut pts = Vec::new();
    for t in 0..n {
        for y in 0..h {
            for x in 0..w {
                let r = resp[t].at(x, y);
                if r <= threshold {
                    continue;
                }
                let mut is_max = true;
                'nb: for dt in -1isize..=1 {
                    for dy in -1isize..=1 {
                        for dx in -1isize..=1 {
                            if dt == 0 && dy == 0 && dx == 0 {
                                continue;
                            }
                            let (tt, yy, xx) = (t as isize + dt, y as isize + dy, x as isize + dx);
                            if tt < 0 || yy < 0 || xx < 0 || tt >= n as isize || yy >= h as isize || xx >= w as isize {
                                continue;
                            }
                            let q = resp[tt as usize].at(xx as usize, yy as usize);
                            // ties go to the earliest voxel in scan order
                            let earlier = (dt, dy, dx) < (0, 0, 0);
                            if q > r || (earlier && q == r) {
                                is_max = false;
                                break 'nb;
                            }
                        }
                    }
                }
                if is_max {
                    pts.push(InterestPoint { x, y, t, response: r });
                }
            }
        }
    }
    pts
}

fn describe(smoothed: &[Frame], p: &InterestPoint, params: &CuboidParams) -> Vec<f64> {
    let (w, h) = smoothed[0].dims();
    let n = smoothed.len() as isize;
    let at = |x: isize, y: isize, t: isize| smoothed[t.clamp(0, n - 1) as usize].at_clamped(x, y);
    let xs = CuboidParams::samples(params.extent.0, params.stride);
    let ys = CuboidParams::samples(params.extent.1, params.stride);
    let ts = CuboidParams::samples(params.extent.2, params.stride);
    let mut d = Vec::with_capacity(params.descriptor_dim());
    for &dt in &ts {
        for &dy in &ys {
            for &dx in &xs {
                let x = (p.x as isize + dx).clamp(0, w as isize - 1);
                let y = (p.y as isize + dy).clamp(0, h as isize - 1);
                let t = p.t as isize + dt;
                d.push(0.5 * (at(x + 1, y, t) - at(x - 1, y, t)));
                d.push(0.5 * (at(x, y + 1, t) - at(x, y - 1, t)));
                d.push(0.5 * (at(x, y, t + 1) - at(x, y, t - 1)));
            }
        }
    }
    let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        d.iter_mut().for_each(|v| *v /= norm);
    }
    d
}

pub fn compute_cuboids(frames: &[Frame], params: &CuboidParams) -> Result<CuboidDescriptorSet> {
    if frames.len() < params.min_frames() {
        return Err(Error::invalid(format!(
            "cuboid detection needs at least {} frames, got {}",
            params.min_frames(),
            frames.len()
        )));
    }
    if !(params.sigma > 0.0 && params.tau > 0.0) {
        return Err(Error::invalid("cuboid scales must be positive"));
    }
    let mut resp = detector_response(frames, params.sigma, params.tau);
    let peak = resp.iter().flat_map(|f| f.data.iter()).fold(0.0f64, |m, &x| m.max(x));
    // numerically flat responses (static video) produce no points
    let scale = frames.iter().flat_map(|f| f.data.iter()).fold(0.0f64, |m, &x| m.max(x.abs()));
    if peak <= 1e-20 * (1.0 + scale * scale) {
        return Ok(CuboidDescriptorSet::default());
    }
    for f in &mut resp {
        f.data.iter_mut().for_each(|x| *x /= peak);
    }
    let mut points = local_maxima(&resp, params.threshold);
    points.sort_by(|a, b| {
        b.response
            .partial_cmp(&a.response)
            .unwrap()
            .then((a.t, a.y, a.x).cmp(&(b.t, b.y, b.x)))
    });
    points.truncate(params.max_points);
    let smoothed = smooth(frames, params.sigma);
    let descriptors = points.iter().map(|p| describe(&smoothed, p, params)).collect();
    Ok(CuboidDescriptorSet { points, descriptors })
}
