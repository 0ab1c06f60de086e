//! Audio chain: WAV loading, resampling to 24 kHz, MFCC frames, UBM
//! training, MAP mean adaptation and supervectors.

pub mod gmm;
pub mod mfcc;

use std::path::Path;

use crate::error::{Error, Result};

pub use gmm::{map_adapt, supervector, train_ubm, DiagGmm, UbmFit, DEFAULT_MIXTURES, RELEVANCE};
pub use mfcc::{mfcc, MfccConfig, MFCC_DIM};

pub const TARGET_RATE: u32 = 24_000;

/// Reads a mono 16-bit PCM WAV as samples in `[-1, 1)`.
pub fn read_wav(path: &Path) -> Result<(Vec<f64>, u32)> {
    let decode = |msg: String| Error::Decode { path: path.to_path_buf(), msg };
    let mut reader = hound::WavReader::open(path).map_err(|e| decode(e.to_string()))?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(decode(format!(
            "expected mono 16-bit PCM, got {} channel(s) at {} bits",
            spec.channels, spec.bits_per_sample
        )));
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| decode(e.to_string()))?;
    Ok((samples, spec.sample_rate))
}

pub fn write_wav(path: &Path, samples: &[f64], sample_rate: u32) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let encode = |e: hound::Error| Error::Decode { path: path.to_path_buf(), msg: e.to_string() };
    let mut w = hound::WavWriter::create(path, spec).map_err(encode)?;
    for &s in samples {
        w.write_sample((s * 32767.0).round().clamp(-32768.0, 32767.0) as i16).map_err(encode)?;
    }
    w.finalize().map_err(encode)
}

/// Zero crossings of the sinc kernel on each side, at the lower sample rate.
const SINC_ZERO_CROSSINGS: f64 = 32.0;
/// Passband edge as a fraction of the lower Nyquist frequency.
const SINC_ROLLOFF: f64 = 0.95;

fn blackman(x: f64) -> f64 {
    // x in [-1, 1]
    let p = std::f64::consts::PI * (x + 1.0);
    0.42 - 0.5 * p.cos() + 0.08 * (2.0 * p).cos()
}

/// Band-limited resampling with a Blackman-windowed sinc interpolator.
///
/// The low-pass cutoff sits at 0.95 of the lower Nyquist frequency and the
/// kernel spans 32 zero crossings per side. Equal rates return the input.
pub fn resample(samples: &[f64], from: u32, to: u32) -> Vec<f64> {
    if from == to || samples.is_empty() {
        return samples.to_vec();
    }
    let ratio = to as f64 / from as f64;
    // cutoff in cycles per input sample
    let fc = 0.5 * SINC_ROLLOFF * ratio.min(1.0);
    let half = SINC_ZERO_CROSSINGS / (2.0 * fc);
    let n_out = (samples.len() as f64 * ratio).floor() as usize;
    let last = samples.len() as isize - 1;
    (0..n_out)
        .map(|n| {
            let t = n as f64 / ratio;
            let lo = (t - half).ceil() as isize;
            let hi = (t + half).floor() as isize;
            let mut acc = 0.0;
            for k in lo.max(0)..=hi.min(last) {
                let x = t - k as f64;
                let arg = 2.0 * fc * x;
                let sinc = if arg.abs() < 1e-12 {
                    1.0
                } else {
                    (std::f64::consts::PI * arg).sin() / (std::f64::consts::PI * arg)
                };
                acc += samples[k as usize] * 2.0 * fc * sinc * blackman(x / half);
            }
            acc
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wav_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let s: Vec<f64> = (0..100).map(|i| ((i as f64) * 0.1).sin() * 0.5).collect();
        write_wav(&p, &s, 16_000).unwrap();
        let (back, rate) = read_wav(&p).unwrap();
        assert_eq!(rate, 16_000);
        for (a, b) in s.iter().zip(&back) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn resampled_tone_matches_analytic() {
        let f = 440.0;
        let src: Vec<f64> = (0..16_000).map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / 16_000.0).sin()).collect();
        let out = resample(&src, 16_000, 24_000);
        assert_eq!(out.len(), 24_000);
        let max_err = (2000..22_000)
            .map(|i| (out[i] - (2.0 * std::f64::consts::PI * f * i as f64 / 24_000.0).sin()).abs())
            .fold(0.0f64, f64::max);
        assert!(max_err < 1e-3, "max error {max_err}");
    }

    #[test]
    fn downsampling_removes_aliases() {
        // 15 kHz is above the 12 kHz Nyquist of the target rate
        let src: Vec<f64> = (0..48_000).map(|i| (2.0 * std::f64::consts::PI * 15_000.0 * i as f64 / 48_000.0).sin()).collect();
        let out = resample(&src, 48_000, 24_000);
        let rms = (out[2000..22_000].iter().map(|x| x * x).sum::<f64>() / 20_000.0).sqrt();
        assert!(rms < 0.01, "alias rms {rms}");
    }
}
