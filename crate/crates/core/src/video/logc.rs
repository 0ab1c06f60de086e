//! Log-Euclidean covariance descriptors (78 dims per temporal window).
//!
//! Per-pixel feature (12): `[I_t, u, v, u_t, v_t, u_x, u_y, v_x, v_y,
//! div, vort, shear]` with `div = u_x + v_y`, `vort = v_x − u_y` and
//! `shear = (u_y + v_x)/2`. The window covariance is loaded with
//! `ε = 1e-5·tr(Σ)/12`, mapped through the matrix logarithm and its upper
//! triangle vectorized with off-diagonals scaled by √2, so that Euclidean
//! distance between vectors equals the Frobenius distance between logs.

use nalgebra::{SMatrix, SVector};

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::frame::Frame;

pub const FEATURES: usize = 12;
pub const LOGC_DIM: usize = FEATURES * (FEATURES + 1) / 2;
pub const DEFAULT_WINDOW: usize = 15;
pub const DEFAULT_STRIDE: usize = 5;

/// Floor for the diagonal loading when the covariance is all zero.
const MIN_LOADING: f64 = 1e-10;

pub type Cov = SMatrix<f64, FEATURES, FEATURES>;
pub type PixelFeature = SVector<f64, FEATURES>;

/// Streaming mean/covariance accumulator.
#[derive(Debug, Clone)]
pub struct CovAccumulator {
    n: usize,
    sum: PixelFeature,
    outer: Cov,
}

impl Default for CovAccumulator {
    fn default() -> Self {
        CovAccumulator { n: 0, sum: PixelFeature::zeros(), outer: Cov::zeros() }
    }
}

impl CovAccumulator {
    pub fn push(&mut self, f: &PixelFeature) {
        self.n += 1;
        self.sum += f;
        self.outer.ger(1.0, f, f, 1.0);
    }

    pub fn count(&self) -> usize {
        self.n
    }

    /// Unbiased sample covariance.
    pub fn covariance(&self) -> Result<Cov> {
        if self.n < 2 {
            return Err(Error::invalid(format!("covariance window has {} samples, need 2", self.n)));
        }
        let n = self.n as f64;
        let mean = self.sum / n;
        let mut c = (self.outer - mean * mean.transpose() * n) / (n - 1.0);
        c = (c + c.transpose()) * 0.5;
        Ok(c)
    }
}

pub fn regularize(cov: &Cov) -> Cov {
    let eps = (1e-5 * cov.trace() / FEATURES as f64).max(MIN_LOADING);
    cov + Cov::identity() * eps
}

/// Matrix logarithm of a symmetric positive-definite matrix.
pub fn spd_log(m: &Cov) -> Cov {
    let eig = m.symmetric_eigen();
    let logs = eig.eigenvalues.map(|l| l.max(f64::MIN_POSITIVE).ln());
    let q = &eig.eigenvectors;
    q * Cov::from_diagonal(&logs) * q.transpose()
}

pub fn vectorize(sym: &Cov) -> Vec<f64> {
    let mut v = Vec::with_capacity(LOGC_DIM);
    for i in 0..FEATURES {
        for j in i..FEATURES {
            let s = if i == j { 1.0 } else { std::f64::consts::SQRT_2 };
            v.push(sym[(i, j)] * s);
        }
    }
    v
}

pub fn devectorize(v: &[f64]) -> Result<Cov> {
    if v.len() != LOGC_DIM {
        return Err(Error::DimensionMismatch { expected: LOGC_DIM, got: v.len() });
    }
    let mut m = Cov::zeros();
    let mut k = 0;
    for i in 0..FEATURES {
        for j in i..FEATURES {
            let x = if i == j { v[k] } else { v[k] / std::f64::consts::SQRT_2 };
            m[(i, j)] = x;
            m[(j, i)] = x;
            k += 1;
        }
    }
    Ok(m)
}

/// Log-Euclidean vector of a raw (unregularized) covariance.
pub fn log_euclidean_vector(cov: &Cov) -> Vec<f64> {
    vectorize(&spd_log(&regularize(cov)))
}

fn deriv(field: &[f64], w: usize, h: usize, x: usize, y: usize) -> (f64, f64) {
    let at = |x: usize, y: usize| field[y * w + x];
    let dx = match (x > 0, x + 1 < w) {
        (true, true) => 0.5 * (at(x + 1, y) - at(x - 1, y)),
        (false, true) => at(x + 1, y) - at(x, y),
        (true, false) => at(x, y) - at(x - 1, y),
        _ => 0.0,
    };
    let dy = match (y > 0, y + 1 < h) {
        (true, true) => 0.5 * (at(x, y + 1) - at(x, y - 1)),
        (false, true) => at(x, y + 1) - at(x, y),
        (true, false) => at(x, y) - at(x, y - 1),
        _ => 0.0,
    };
    (dx, dy)
}

/// Adds the pixel features of flow index `t` to `acc`.
fn accumulate_frame(frames: &[Frame], flows: &[FlowField], t: usize, acc: &mut CovAccumulator) {
    let flow = &flows[t];
    let (w, h) = (flow.width, flow.height);
    let (prev_t, next_t) = if flows.len() == 1 {
        (t, t)
    } else if t + 1 < flows.len() {
        (t, t + 1)
    } else {
        (t - 1, t)
    };
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let it = frames[t + 1].data[i] - frames[t].data[i];
            let (u, v) = (flow.u[i], flow.v[i]);
            let ut = flows[next_t].u[i] - flows[prev_t].u[i];
            let vt = flows[next_t].v[i] - flows[prev_t].v[i];
            let (ux, uy) = deriv(&flow.u, w, h, x, y);
            let (vx, vy) = deriv(&flow.v, w, h, x, y);
            let f = PixelFeature::from_column_slice(&[
                it,
                u,
                v,
                ut,
                vt,
                ux,
                uy,
                vx,
                vy,
                ux + vy,
                vx - uy,
                0.5 * (uy + vx),
            ]);
            acc.push(&f);
        }
    }
}

/// Window start indices over `n` flow fields.
pub fn window_starts(n: usize, window_len: usize, stride: usize) -> Vec<usize> {
    if window_len > n {
        return Vec::new();
    }
    (0..=n - window_len).step_by(stride.max(1)).collect()
}

/// One 78-dim vector per window of `window_len` flow fields.
///
/// `flows[t]` must map `frames[t]` to `frames[t + 1]`.
pub fn compute_logc_windows(
    frames: &[Frame],
    flows: &[FlowField],
    window_len: usize,
    stride: usize,
) -> Result<Vec<Vec<f64>>> {
    if flows.is_empty() || frames.len() != flows.len() + 1 {
        return Err(Error::invalid(format!(
            "Log-C needs n frames and n-1 flows, got {} and {}",
            frames.len(),
            flows.len()
        )));
    }
    if window_len == 0 || window_len > flows.len() {
        return Err(Error::invalid(format!(
            "window length {window_len} exceeds {} flow fields",
            flows.len()
        )));
    }
    window_starts(flows.len(), window_len, stride)
        .into_iter()
        .map(|s| {
            let mut acc = CovAccumulator::default();
            for t in s..s + window_len {
                accumulate_frame(frames, flows, t, &mut acc);
            }
            Ok(log_euclidean_vector(&acc.covariance()?))
        })
        .collect()
}
