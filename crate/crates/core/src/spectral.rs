//! FFT helpers shared by the temporal descriptors and MFCC.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Magnitudes `|X_k| / n` for the `keep` lowest non-negative frequencies of
/// `series`. When the series resolves fewer than `keep` non-negative bins
/// (`n/2 + 1`), the missing high bins are reported as zero.
pub fn low_frequency_magnitudes(series: &[f64], keep: usize) -> Vec<f64> {
    let n = series.len();
    let mut out = vec![0.0; keep];
    if n == 0 {
        return out;
    }
    let mut buf: Vec<Complex<f64>> = series.iter().map(|&x| Complex::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    for (o, c) in out.iter_mut().zip(buf.iter().take(n / 2 + 1)) {
        *o = c.norm() / n as f64;
    }
    out
}

/// Squared magnitude spectrum of `frame` zero-padded to `nfft`, bins `0..=nfft/2`.
pub fn power_spectrum(frame: &[f64], nfft: usize) -> Vec<f64> {
    let mut buf: Vec<Complex<f64>> = frame.iter().map(|&x| Complex::new(x, 0.0)).collect();
    buf.resize(nfft, Complex::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(nfft).process(&mut buf);
    buf.iter().take(nfft / 2 + 1).map(|c| c.norm_sqr()).collect()
}
