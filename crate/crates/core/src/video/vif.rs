//! Virtual inertial features (106 dims) from the intensity-centroid track.
//!
//! Each frame is mean-subtracted and clipped at zero before the centroid is
//! taken, which makes the track invariant to a global brightness offset.
//! Velocity and acceleration are first and second differences of the track.
//! Signals: `vx, vy, ax, ay, |v|, |a|`.
//!
//! Layout: 4 zero-crossing rates (signed axis signals only), then for each of
//! the six signals the 7 statistics `min, max, median, energy, kurtosis,
//! mean, std`, then for each signal the 10 lowest DFT magnitudes.

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::spectral::low_frequency_magnitudes;

pub const ZC_DIM: usize = 4;
pub const STATS: usize = 7;
pub const FREQS: usize = 10;
pub const SIGNALS: usize = 6;
pub const VIF_DIM: usize = ZC_DIM + STATS * SIGNALS + FREQS * SIGNALS;

#[derive(Debug, Clone, PartialEq)]
pub struct VifVector {
    pub zc: Vec<f64>,
    pub four_meks: Vec<f64>,
    pub ff: Vec<f64>,
}

impl VifVector {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(VIF_DIM);
        v.extend_from_slice(&self.zc);
        v.extend_from_slice(&self.four_meks);
        v.extend_from_slice(&self.ff);
        v
    }
}

pub fn intensity_centroid(frame: &Frame) -> Result<(f64, f64)> {
    let mean = frame.mean();
    let (mut m, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for y in 0..frame.height {
        for x in 0..frame.width {
            let w = (frame.at(x, y) - mean).max(0.0);
            m += w;
            sx += w * x as f64;
            sy += w * y as f64;
        }
    }
    if m <= 0.0 {
        return Err(Error::ZeroMassFrames);
    }
    Ok((sx / m, sy / m))
}

/// Fraction of consecutive samples whose sign flips after mean removal.
pub fn zero_crossing_rate(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let scale = centered.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    // treat round-off around a constant signal as exactly zero
    let tol = 1e-12 * scale.max(1e-300);
    let signs: Vec<i8> = centered
        .iter()
        .map(|&v| if v > tol { 1 } else if v < -tol { -1 } else { 0 })
        .filter(|&s| s != 0)
        .collect();
    let flips = signs.windows(2).filter(|w| w[0] != w[1]).count();
    flips as f64 / (x.len() - 1) as f64
}

/// `[min, max, median, energy, kurtosis, mean, std]`; kurtosis is the
/// non-excess fourth standardized moment, 0 for a constant signal.
pub fn statistics(x: &[f64]) -> [f64; STATS] {
    let n = x.len() as f64;
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    let mean = x.iter().sum::<f64>() / n;
    let m2 = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m4 = x.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    let kurtosis = if m2 > 1e-24 { m4 / (m2 * m2) } else { 0.0 };
    let energy = x.iter().map(|v| v * v).sum::<f64>() / n;
    [sorted[0], *sorted.last().unwrap(), median, energy, kurtosis, mean, m2.sqrt()]
}

pub fn compute_vif(frames: &[Frame]) -> Result<VifVector> {
    if frames.len() < 4 {
        return Err(Error::invalid("VIF needs at least 4 frames"));
    }
    let track = frames.iter().map(intensity_centroid).collect::<Result<Vec<_>>>()?;
    let vel: Vec<(f64, f64)> = track.windows(2).map(|w| (w[1].0 - w[0].0, w[1].1 - w[0].1)).collect();
    let acc: Vec<(f64, f64)> = vel.windows(2).map(|w| (w[1].0 - w[0].0, w[1].1 - w[0].1)).collect();
    let signals: [Vec<f64>; SIGNALS] = [
        vel.iter().map(|p| p.0).collect(),
        vel.iter().map(|p| p.1).collect(),
        acc.iter().map(|p| p.0).collect(),
        acc.iter().map(|p| p.1).collect(),
        vel.iter().map(|p| p.0.hypot(p.1)).collect(),
        acc.iter().map(|p| p.0.hypot(p.1)).collect(),
    ];
    let zc = signals[..ZC_DIM].iter().map(|s| zero_crossing_rate(s)).collect();
    let four_meks = signals.iter().flat_map(|s| statistics(s)).collect();
    let ff = signals.iter().flat_map(|s| low_frequency_magnitudes(s, FREQS)).collect();
    Ok(VifVector { zc, four_meks, ff })
}
