//! Grid optical-flow features (137 dims).
//!
//! Flow is averaged over a `gx × gy` grid of cells per frame pair. From the
//! cell vectors:
//!
//! * MMHF (15): histogram of cell magnitudes, bin 0 = `[0, 0.1)` and 14
//!   geometric bins between 0.1 and 16 px/frame (the last bin is open).
//! * MDHF (36): histogram of cell directions in 10° bins, moving cells only.
//! * MDHSF (36): temporal standard deviation of the per-frame direction
//!   histograms.
//! * FTMAF (25): lowest 25 DFT magnitudes of the per-frame dominant
//!   direction (bin index + 1, or 0 for a frame without motion).
//! * FTMPF (25): low-frequency DFT magnitudes of the per-frame spatial
//!   standard deviation of cell magnitudes.

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::spectral::low_frequency_magnitudes;

pub const MMHF_BINS: usize = 15;
pub const MDHF_BINS: usize = 36;
pub const FT_BINS: usize = 25;
pub const GOFF_DIM: usize = MMHF_BINS + 2 * MDHF_BINS + 2 * FT_BINS;

/// Cells slower than this (px/frame) count as stationary.
pub const STATIONARY: f64 = 0.1;
const MAX_EDGE: f64 = 16.0;

#[derive(Debug, Clone, PartialEq)]
pub struct GoffVector {
    pub mmhf: Vec<f64>,
    pub mdhf: Vec<f64>,
    pub mdhsf: Vec<f64>,
    pub ftmaf: Vec<f64>,
    pub ftmpf: Vec<f64>,
}

impl GoffVector {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(GOFF_DIM);
        v.extend_from_slice(&self.mmhf);
        v.extend_from_slice(&self.mdhf);
        v.extend_from_slice(&self.mdhsf);
        v.extend_from_slice(&self.ftmaf);
        v.extend_from_slice(&self.ftmpf);
        v
    }
}

/// Lower edges of the 15 magnitude bins.
pub fn magnitude_edges() -> [f64; MMHF_BINS] {
    let mut edges = [0.0; MMHF_BINS];
    let ratio = (MAX_EDGE / STATIONARY).powf(1.0 / (MMHF_BINS - 2) as f64);
    for (i, e) in edges.iter_mut().enumerate().skip(1) {
        *e = STATIONARY * ratio.powi(i as i32 - 1);
    }
    edges
}

pub fn magnitude_bin(m: f64, edges: &[f64; MMHF_BINS]) -> usize {
    edges.iter().rposition(|&e| m >= e).unwrap_or(0)
}

/// Direction in degrees in `[0, 360)`, image coordinates (y down).
pub fn direction_bin(u: f64, v: f64) -> usize {
    let deg = v.atan2(u).to_degrees().rem_euclid(360.0);
    ((deg / 10.0).floor() as usize).min(MDHF_BINS - 1)
}

/// Mean flow per grid cell, row-major over cells.
pub fn grid_means(flow: &FlowField, grid: (usize, usize)) -> Vec<(f64, f64)> {
    let (gx, gy) = grid;
    let mut sums = vec![(0.0, 0.0, 0usize); gx * gy];
    for y in 0..flow.height {
        let cy = (y * gy / flow.height).min(gy - 1);
        for x in 0..flow.width {
            let cx = (x * gx / flow.width).min(gx - 1);
            let (u, v) = flow.at(x, y);
            let s = &mut sums[cy * gx + cx];
            s.0 += u;
            s.1 += v;
            s.2 += 1;
        }
    }
    sums.into_iter()
        .map(|(u, v, n)| if n == 0 { (0.0, 0.0) } else { (u / n as f64, v / n as f64) })
        .collect()
}

fn l1_normalize(h: &mut [f64]) {
    let s: f64 = h.iter().sum();
    if s > 0.0 {
        h.iter_mut().for_each(|x| *x /= s);
    }
}

fn std_dev(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

pub fn compute_goff(flows: &[FlowField], grid: (usize, usize)) -> Result<GoffVector> {
    if flows.len() < 2 {
        return Err(Error::invalid("GOFF needs at least 2 flow fields"));
    }
    if grid.0 == 0 || grid.1 == 0 {
        return Err(Error::invalid("GOFF grid must be non-empty"));
    }
    let edges = magnitude_edges();
    let cells_per_frame = (grid.0 * grid.1) as f64;
    let mut mmhf = vec![0.0; MMHF_BINS];
    let mut mdhf = vec![0.0; MDHF_BINS];
    let mut per_frame_dir: Vec<Vec<f64>> = Vec::with_capacity(flows.len());
    let mut dominant = Vec::with_capacity(flows.len());
    let mut spread = Vec::with_capacity(flows.len());

    for flow in flows {
        let cells = grid_means(flow, grid);
        let mut dir = vec![0.0; MDHF_BINS];
        let mut mags = Vec::with_capacity(cells.len());
        for &(u, v) in &cells {
            let m = u.hypot(v);
            mags.push(m);
            mmhf[magnitude_bin(m, &edges)] += 1.0;
            if m >= STATIONARY {
                let b = direction_bin(u, v);
                mdhf[b] += 1.0;
                dir[b] += 1.0;
            }
        }
        let top = dir
            .iter()
            .enumerate()
            .fold(None, |best: Option<(usize, f64)>, (b, &c)| match best {
                Some((_, bc)) if bc >= c => best,
                _ if c > 0.0 => Some((b, c)),
                _ => best,
            });
        dominant.push(top.map_or(0.0, |(b, _)| (b + 1) as f64));
        spread.push(std_dev(&mags));
        dir.iter_mut().for_each(|c| *c /= cells_per_frame);
        per_frame_dir.push(dir);
    }
    l1_normalize(&mut mmhf);
    l1_normalize(&mut mdhf);

    let mdhsf = (0..MDHF_BINS)
        .map(|b| std_dev(&per_frame_dir.iter().map(|h| h[b]).collect::<Vec<_>>()))
        .collect();

    Ok(GoffVector {
        mmhf,
        mdhf,
        mdhsf,
        ftmaf: low_frequency_magnitudes(&dominant, FT_BINS),
        ftmpf: low_frequency_magnitudes(&spread, FT_BINS),
    })
}
