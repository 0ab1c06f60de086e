//! MFCC frame features: 12 cepstra, log energy, deltas (±3) and
//! delta-deltas (±2), 39 columns per frame.

use crate::error::{Error, Result};
use crate::spectral::power_spectrum;

pub const MFCC_DIM: usize = 39;
const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MfccConfig {
    pub sample_rate: u32,
    pub frame_len_ms: f64,
    pub frame_shift_ms: f64,
    pub n_filters: usize,
    pub n_ceps: usize,
    pub delta_span: usize,
    pub delta_delta_span: usize,
    pub pre_emphasis: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        MfccConfig {
            sample_rate: 24_000,
            frame_len_ms: 40.0,
            frame_shift_ms: 10.0,
            n_filters: 23,
            n_ceps: 12,
            delta_span: 3,
            delta_delta_span: 2,
            pre_emphasis: 0.97,
        }
    }
}

impl MfccConfig {
    pub fn frame_len(&self) -> usize {
        (self.sample_rate as f64 * self.frame_len_ms / 1000.0).round() as usize
    }

    pub fn frame_shift(&self) -> usize {
        (self.sample_rate as f64 * self.frame_shift_ms / 1000.0).round() as usize
    }

    pub fn nfft(&self) -> usize {
        self.frame_len().next_power_of_two()
    }

    /// Static + delta + delta-delta columns.
    pub fn dim(&self) -> usize {
        3 * (self.n_ceps + 1)
    }

    pub fn frame_count(&self, n_samples: usize) -> usize {
        let l = self.frame_len();
        if n_samples < l {
            0
        } else {
            1 + (n_samples - l) / self.frame_shift()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.frame_len() <= self.frame_shift() || self.frame_shift() == 0 {
            return Err(Error::invalid("frame length must exceed a positive frame shift"));
        }
        if self.n_ceps >= self.n_filters {
            return Err(Error::invalid("n_ceps must be below n_filters"));
        }
        Ok(())
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters equally spaced on the mel scale between 0 Hz and
/// Nyquist; one row of FFT-bin weights per filter.
pub fn mel_filterbank(config: &MfccConfig) -> Vec<Vec<f64>> {
    let nfft = config.nfft();
    let nyquist = config.sample_rate as f64 / 2.0;
    let top = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..config.n_filters + 2)
        .map(|i| mel_to_hz(top * i as f64 / (config.n_filters + 1) as f64))
        .collect();
    (0..config.n_filters)
        .map(|j| {
            let (lo, mid, hi) = (edges[j], edges[j + 1], edges[j + 2]);
            (0..=nfft / 2)
                .map(|k| {
                    let f = k as f64 * config.sample_rate as f64 / nfft as f64;
                    if f <= lo || f >= hi {
                        0.0
                    } else if f <= mid {
                        (f - lo) / (mid - lo)
                    } else {
                        (hi - f) / (hi - mid)
                    }
                })
                .collect()
        })
        .collect()
}

/// Regression deltas over `±span` frames with replicated edges.
pub fn deltas(rows: &[Vec<f64>], span: usize) -> Vec<Vec<f64>> {
    let n = rows.len() as isize;
    let denom = 2.0 * (1..=span).map(|t| (t * t) as f64).sum::<f64>();
    (0..n)
        .map(|t| {
            let dim = rows[t as usize].len();
            (0..dim)
                .map(|j| {
                    (1..=span as isize)
                        .map(|th| {
                            let fwd = &rows[(t + th).min(n - 1) as usize];
                            let back = &rows[(t - th).max(0) as usize];
                            th as f64 * (fwd[j] - back[j])
                        })
                        .sum::<f64>()
                        / denom
                })
                .collect()
        })
        .collect()
}

/// Static 13-column features (c1..c12, log energy) for one frame.
fn static_frame(frame: &[f64], config: &MfccConfig, bank: &[Vec<f64>], window: &[f64]) -> Vec<f64> {
    let energy = frame.iter().map(|x| x * x).sum::<f64>().max(LOG_FLOOR).ln();
    let k = config.pre_emphasis;
    let shaped: Vec<f64> = (0..frame.len())
        .map(|i| {
            let prev = if i == 0 { frame[0] } else { frame[i - 1] };
            (frame[i] - k * prev) * window[i]
        })
        .collect();
    let mag: Vec<f64> = power_spectrum(&shaped, config.nfft()).into_iter().map(f64::sqrt).collect();
    let log_bank: Vec<f64> = bank
        .iter()
        .map(|w| w.iter().zip(&mag).map(|(a, b)| a * b).sum::<f64>().max(LOG_FLOOR).ln())
        .collect();
    let nf = log_bank.len() as f64;
    let mut out: Vec<f64> = (1..=config.n_ceps)
        .map(|i| {
            (2.0 / nf).sqrt()
                * log_bank
                    .iter()
                    .enumerate()
                    .map(|(j, &l)| l * (std::f64::consts::PI * i as f64 * (j as f64 + 0.5) / nf).cos())
                    .sum::<f64>()
        })
        .collect();
    out.push(energy);
    out
}

/// MFCC rows for audio already at `config.sample_rate`.
pub fn mfcc(samples: &[f64], config: &MfccConfig) -> Result<Vec<Vec<f64>>> {
    config.validate()?;
    let (len, shift) = (config.frame_len(), config.frame_shift());
    let n = config.frame_count(samples.len());
    if n == 0 {
        return Err(Error::invalid(format!(
            "audio has {} samples, shorter than one {len}-sample frame",
            samples.len()
        )));
    }
    let bank = mel_filterbank(config);
    let window: Vec<f64> = (0..len)
        .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (len - 1) as f64).cos())
        .collect();
    let statics: Vec<Vec<f64>> = (0..n)
        .map(|t| static_frame(&samples[t * shift..t * shift + len], config, &bank, &window))
        .collect();
    let d1 = deltas(&statics, config.delta_span);
    let d2 = deltas(&d1, config.delta_delta_span);
    Ok(statics
        .into_iter()
        .zip(d1)
        .zip(d2)
        .map(|((s, a), b)| s.into_iter().chain(a).chain(b).collect())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, secs: f64, gain: f64) -> Vec<f64> {
        let n = (24_000.0 * secs) as usize;
        (0..n).map(|i| gain * (2.0 * std::f64::consts::PI * freq * i as f64 / 24_000.0).sin()).collect()
    }

    #[test]
    fn one_second_gives_97_frames() {
        let c = MfccConfig::default();
        assert_eq!(c.frame_len(), 960);
        assert_eq!(c.frame_shift(), 240);
        let rows = mfcc(&tone(1000.0, 1.0, 1.0), &c).unwrap();
        assert_eq!(rows.len(), 97);
        assert!(rows.iter().all(|r| r.len() == MFCC_DIM && r.iter().all(|x| x.is_finite())));
    }

    #[test]
    fn silence_has_flat_cepstrum() {
        let rows = mfcc(&vec![0.0; 24_000], &MfccConfig::default()).unwrap();
        for r in &rows {
            assert!(r[..12].iter().all(|x| x.abs() < 1e-9));
            assert!(r[13..].iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn cepstra_ignore_gain() {
        let c = MfccConfig::default();
        let a = mfcc(&tone(700.0, 0.3, 0.3), &c).unwrap();
        let b = mfcc(&tone(700.0, 0.3, 0.6), &c).unwrap();
        for (ra, rb) in a.iter().zip(&b) {
            for j in 0..12 {
                assert!((ra[j] - rb[j]).abs() < 1e-8);
            }
            assert!((rb[12] - ra[12] - 4f64.ln()).abs() < 1e-8);
        }
    }

    #[test]
    fn too_short_is_an_error() {
        assert!(mfcc(&[0.0; 959], &MfccConfig::default()).is_err());
    }

    #[test]
    fn deltas_of_ramp_are_constant() {
        let rows: Vec<Vec<f64>> = (0..20).map(|t| vec![2.0 * t as f64]).collect();
        let d = deltas(&rows, 3);
        for r in &d[3..17] {
            assert!((r[0] - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn filterbank_shape() {
        let bank = mel_filterbank(&MfccConfig::default());
        assert_eq!(bank.len(), 23);
        assert!(bank.iter().all(|w| w.len() == 513 && w.iter().any(|&x| x > 0.0)));
    }
}
