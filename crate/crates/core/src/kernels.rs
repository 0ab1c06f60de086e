//! Kernel functions and Gram matrices.
//!
//! DC-Int operates on concatenated multi-channel histograms: the input
//! vector is the concatenation of `N` histograms with the widths stored in
//! the spec, and `κ = exp(−Σₙ Dₙ)` with `Dₙ = 1 − Σ min / Σ max`.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_DEGREE: u32 = 3;
pub const DEFAULT_BIAS: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum KernelSpec {
    Linear,
    Polynomial { degree: u32, bias: f64 },
    Rbf { gamma: f64 },
    DcInt { channels: Vec<String>, widths: Vec<usize> },
}

impl KernelSpec {
    pub fn polynomial() -> Self {
        KernelSpec::Polynomial { degree: DEFAULT_DEGREE, bias: DEFAULT_BIAS }
    }

    /// Short kind label used in selection reports.
    pub fn kind(&self) -> &'static str {
        match self {
            KernelSpec::Linear => "linear",
            KernelSpec::Polynomial { .. } => "polynomial",
            KernelSpec::Rbf { .. } => "rbf",
            KernelSpec::DcInt { .. } => "dc_int",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::Polynomial { degree, bias } if *degree < 1 || *bias < 0.0 => {
                Err(Error::invalid("polynomial kernel needs degree >= 1 and bias >= 0"))
            }
            KernelSpec::Rbf { gamma } if !(*gamma > 0.0) => Err(Error::invalid("rbf gamma must be positive")),
            KernelSpec::DcInt { channels, widths } if channels.is_empty() || channels.len() != widths.len() => {
                Err(Error::invalid("dc_int needs one width per channel and at least one channel"))
            }
            _ => Ok(()),
        }
    }

    fn input_dim(&self) -> Option<usize> {
        match self {
            KernelSpec::DcInt { widths, .. } => Some(widths.iter().sum()),
            _ => None,
        }
    }
}

/// One base kernel of a bank: a kernel function over a set of feature channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankEntry {
    pub name: String,
    pub spec: KernelSpec,
    pub channels: Vec<String>,
}

/// Histogram distance `1 − Σ min / Σ max`; two all-zero histograms are at
/// distance 0.
pub fn histogram_distance(a: &[f64], b: &[f64]) -> f64 {
    let (mut lo, mut hi) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        lo += x.min(*y);
        hi += x.max(*y);
    }
    if hi <= 0.0 {
        0.0
    } else {
        1.0 - lo / hi
    }
}

pub fn kernel_eval(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: y.len() });
    }
    if let Some(d) = spec.input_dim() {
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x.len() });
        }
    }
    Ok(eval_unchecked(spec, x, y))
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn eval_unchecked(spec: &KernelSpec, x: &[f64], y: &[f64]) -> f64 {
    match spec {
        KernelSpec::Linear => dot(x, y),
        KernelSpec::Polynomial { degree, bias } => (dot(x, y) + bias).powi(*degree as i32),
        KernelSpec::Rbf { gamma } => {
            let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
            (-gamma * d2).exp()
        }
        KernelSpec::DcInt { widths, .. } => {
            let mut total = 0.0;
            let mut off = 0;
            for &w in widths {
                total += histogram_distance(&x[off..off + w], &y[off..off + w]);
                off += w;
            }
            (-total).exp()
        }
    }
}

/// `γ = 1 / median pairwise squared distance`.
pub fn median_heuristic_gamma(rows: &[Vec<f64>]) -> f64 {
    let mut d2 = Vec::new();
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            d2.push(rows[i].iter().zip(&rows[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>());
        }
    }
    if d2.is_empty() {
        return 1.0;
    }
    d2.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let med = d2[d2.len() / 2];
    if med > 0.0 {
        1.0 / med
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub k: DMatrix<f64>,
    pub spec: KernelSpec,
    pub normalized: bool,
    /// Raw self-similarities `κ(xᵢ, xᵢ)`, kept for normalizing cross blocks.
    pub self_sim: Vec<f64>,
}

impl GramMatrix {
    pub fn n(&self) -> usize {
        self.k.nrows()
    }

    /// Sub-matrix over the given sample indices (repeats allowed).
    pub fn select(&self, idx: &[usize]) -> GramMatrix {
        GramMatrix {
            k: DMatrix::from_fn(idx.len(), idx.len(), |i, j| self.k[(idx[i], idx[j])]),
            spec: self.spec.clone(),
            normalized: self.normalized,
            self_sim: idx.iter().map(|&i| self.self_sim[i]).collect(),
        }
    }

    /// Symmetric-packed dump: `GRM1`, n (u32 LE), upper triangle row-major as f64 LE.
    pub fn write_packed(&self, path: &Path) -> Result<()> {
        let n = self.n();
        let mut out = Vec::with_capacity(8 + 8 * n * (n + 1) / 2);
        out.extend_from_slice(b"GRM1");
        out.extend_from_slice(&(n as u32).to_le_bytes());
        for i in 0..n {
            for j in i..n {
                out.extend_from_slice(&self.k[(i, j)].to_le_bytes());
            }
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read_packed(path: &Path) -> Result<DMatrix<f64>> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() < 8 || &bytes[..4] != b"GRM1" {
            return Err(Error::CorruptCache("bad Gram dump header".into()));
        }
        let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        if bytes.len() != 8 + 8 * n * (n + 1) / 2 {
            return Err(Error::CorruptCache("truncated Gram dump".into()));
        }
        let mut vals = bytes[8..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = vals.next().unwrap();
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        Ok(k)
    }
}

fn check_samples(spec: &KernelSpec, samples: &[Vec<f64>]) -> Result<()> {
    spec.validate()?;
    let Some(first) = samples.first() else {
        return Err(Error::invalid("Gram matrix needs at least one sample"));
    };
    let d = spec.input_dim().unwrap_or(first.len());
    match samples.iter().find(|s| s.len() != d) {
        Some(s) => Err(Error::DimensionMismatch { expected: d, got: s.len() }),
        None => Ok(()),
    }
}

pub fn gram(spec: &KernelSpec, samples: &[Vec<f64>]) -> Result<GramMatrix> {
    check_samples(spec, samples)?;
    let n = samples.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (0..n).map(|j| if j < i { 0.0 } else { eval_unchecked(spec, &samples[i], &samples[j]) }).collect())
        .collect();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            k[(i, j)] = rows[i][j];
            k[(j, i)] = rows[i][j];
        }
    }
    let self_sim = (0..n).map(|i| k[(i, i)]).collect();
    Ok(GramMatrix { k, spec: spec.clone(), normalized: false, self_sim })
}

/// `K'ᵢⱼ = Kᵢⱼ / √(Kᵢᵢ Kⱼⱼ)`; idempotent on an already normalized matrix.
pub fn normalize(g: &GramMatrix) -> Result<GramMatrix> {
    let n = g.n();
    let diag: Vec<f64> = (0..n).map(|i| g.k[(i, i)]).collect();
    if let Some(i) = diag.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::invalid(format!("non-positive self-similarity at sample {i}")));
    }
    let mut k = DMatrix::from_fn(n, n, |i, j| g.k[(i, j)] / (diag[i] * diag[j]).sqrt());
    for i in 0..n {
        k[(i, i)] = 1.0;
    }
    Ok(GramMatrix { k, spec: g.spec.clone(), normalized: true, self_sim: g.self_sim.clone() })
}

/// Kernel rows of `queries` against `train`, normalized with the query's own
/// self-similarity and the training self-similarities when `train.normalized`.
pub fn cross_gram(train: &GramMatrix, train_samples: &[Vec<f64>], queries: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    if train_samples.len() != train.n() {
        return Err(Error::DimensionMismatch { expected: train.n(), got: train_samples.len() });
    }
    if queries.is_empty() {
        return Ok(DMatrix::zeros(0, train.n()));
    }
    check_samples(&train.spec, queries)?;
    let spec = &train.spec;
    let rows: Vec<Vec<f64>> = queries
        .par_iter()
        .map(|q| {
            let qq = eval_unchecked(spec, q, q);
            train_samples
                .iter()
                .zip(&train.self_sim)
                .map(|(x, &xx)| {
                    let v = eval_unchecked(spec, q, x);
                    if train.normalized {
                        let denom = (qq * xx).sqrt();
                        if denom > 0.0 { v / denom } else { 0.0 }
                    } else {
                        v
                    }
                })
                .collect()
        })
        .collect();
    Ok(DMatrix::from_fn(queries.len(), train.n(), |i, j| rows[i][j]))
}
