//! Reference implementations used as independent oracles by the
//! integration tests. They are deliberately naive.

#![allow(dead_code)]

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        let scale: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum::<f64>().max(1e-300);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).collect()
}

/// Magnitude spectrum of `x` zero-padded to `n` points, bins `0..=n/2`,
/// by direct summation.
fn dft_magnitude(x: &[f64], n: usize) -> Vec<f64> {
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, &v) in x.iter().enumerate() {
                let ang = -2.0 * PI * ((k * t) % n) as f64 / n as f64;
                re += v * ang.cos();
                im += v * ang.sin();
            }
            (re * re + im * im).sqrt()
        })
        .collect()
}

fn mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn inv_mel(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

fn regression(rows: &[Vec<f64>], span: usize) -> Vec<Vec<f64>> {
    let n = rows.len();
    let denom: f64 = 2.0 * (1..=span).map(|t| (t * t) as f64).sum::<f64>();
    let clamp = |i: isize| i.clamp(0, n as isize - 1) as usize;
    (0..n)
        .map(|t| {
            (0..rows[0].len())
                .map(|j| {
                    let mut acc = 0.0;
                    for th in 1..=span as isize {
                        acc += th as f64 * (rows[clamp(t as isize + th)][j] - rows[clamp(t as isize - th)][j]);
                    }
                    acc / denom
                })
                .collect()
        })
        .collect()
}

/// 39-column MFCC rows: 40 ms Hamming frames every 10 ms, pre-emphasis
/// 0.97, 23 mel filters over 0..Nyquist on the magnitude spectrum,
/// c1..c12 by orthonormal DCT-II, log frame energy, then ±3 deltas and ±2
/// delta-deltas with replicated edges.
pub fn reference_mfcc(samples: &[f64], rate: f64) -> Vec<Vec<f64>> {
    let len = (rate * 0.040).round() as usize;
    let shift = (rate * 0.010).round() as usize;
    let nfft = len.next_power_of_two();
    let (filters, ceps) = (23usize, 12usize);
    let top = mel(rate / 2.0);
    let edge = |i: usize| inv_mel(top * i as f64 / (filters + 1) as f64);
    let weight = |j: usize, f: f64| {
        let (lo, mid, hi) = (edge(j), edge(j + 1), edge(j + 2));
        if f > lo && f <= mid {
            (f - lo) / (mid - lo)
        } else if f > mid && f < hi {
            (hi - f) / (hi - mid)
        } else {
            0.0
        }
    };
    let mut statics = Vec::new();
    let mut start = 0;
    while start + len <= samples.len() {
        let frame = &samples[start..start + len];
        let energy = frame.iter().map(|v| v * v).sum::<f64>().max(1e-10).ln();
        let shaped: Vec<f64> = (0..len)
            .map(|i| {
                let prev = if i > 0 { frame[i - 1] } else { frame[0] };
                let w = 0.54 - 0.46 * (2.0 * PI * i as f64 / (len - 1) as f64).cos();
                (frame[i] - 0.97 * prev) * w
            })
            .collect();
        let mag = dft_magnitude(&shaped, nfft);
        let logs: Vec<f64> = (0..filters)
            .map(|j| {
                let e: f64 = mag.iter().enumerate().map(|(k, m)| m * weight(j, k as f64 * rate / nfft as f64)).sum();
                e.max(1e-10).ln()
            })
            .collect();
        let mut row: Vec<f64> = (1..=ceps)
            .map(|i| {
                let s: f64 = logs.iter().enumerate().map(|(j, l)| l * (PI * i as f64 * (2 * j + 1) as f64 / (2 * filters) as f64).cos()).sum();
                s * (2.0 / filters as f64).sqrt()
            })
            .collect();
        row.push(energy);
        statics.push(row);
        start += shift;
    }
    let d1 = regression(&statics, 3);
    let d2 = regression(&d1, 2);
    (0..statics.len()).map(|t| [statics[t].clone(), d1[t].clone(), d2[t].clone()].concat()).collect()
}

/// Worst KKT violation of a soft-margin dual solution, recomputed from
/// scratch: margin conditions per sample and the equality constraint.
pub fn kkt_residual(k: &[Vec<f64>], y: &[f64], alpha: &[f64], bias: f64, c: f64) -> f64 {
    let n = y.len();
    let eps = 1e-8 * c;
    let mut worst = alpha.iter().zip(y).map(|(a, y)| a * y).sum::<f64>().abs();
    for i in 0..n {
        let f: f64 = (0..n).map(|j| alpha[j] * y[j] * k[i][j]).sum::<f64>() + bias;
        let m = y[i] * f;
        let v = if alpha[i] <= eps {
            (1.0 - m).max(0.0)
        } else if alpha[i] >= c - eps {
            (m - 1.0).max(0.0)
        } else {
            (m - 1.0).abs()
        };
        worst = worst.max(v);
    }
    worst
}

/// Cohen's kappa from raw counts, straight from the marginals.
pub fn reference_kappa(cm: &[Vec<u64>]) -> f64 {
    let n: f64 = cm.iter().flatten().sum::<u64>() as f64;
    let c = cm.len();
    let p0: f64 = (0..c).map(|i| cm[i][i] as f64).sum::<f64>() / n;
    let pe: f64 = (0..c)
        .map(|i| {
            let row: f64 = cm[i].iter().sum::<u64>() as f64 / n;
            let col: f64 = cm.iter().map(|r| r[i]).sum::<u64>() as f64 / n;
            row * col
        })
        .sum();
    if (1.0 - pe).abs() < 1e-15 {
        return if (p0 - 1.0).abs() < 1e-15 { 1.0 } else { 0.0 };
    }
    (p0 - pe) / (1.0 - pe)
}
