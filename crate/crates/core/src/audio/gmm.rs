//! Diagonal-covariance GMMs: UBM training by EM and MAP mean adaptation.

use crate::encoding::kmeans_fit;
use crate::error::{Error, Result};

pub const DEFAULT_MIXTURES: usize = 16;
/// MAP relevance factor.
pub const RELEVANCE: f64 = 16.0;
pub const EM_MAX_ITER: usize = 50;
/// Stop when the average per-frame log-likelihood improves by less than this.
pub const EM_TOL: f64 = 1e-4;
const VARIANCE_FLOOR_FRACTION: f64 = 1e-4;
const MIN_VARIANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct DiagGmm {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct UbmFit {
    pub gmm: DiagGmm,
    /// Average per-frame log-likelihood after initialization and after
    /// every EM iteration.
    pub log_likelihood: Vec<f64>,
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl DiagGmm {
    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    fn log_component(&self, k: usize, x: &[f64]) -> f64 {
        let ln2pi = (2.0 * std::f64::consts::PI).ln();
        let mut acc = self.weights[k].ln();
        for ((xi, m), v) in x.iter().zip(&self.means[k]).zip(&self.variances[k]) {
            acc -= 0.5 * (ln2pi + v.ln() + (xi - m) * (xi - m) / v);
        }
        acc
    }

    /// Component posteriors for one frame and the frame log-likelihood.
    pub fn posteriors(&self, x: &[f64]) -> (Vec<f64>, f64) {
        let logs: Vec<f64> = (0..self.components()).map(|k| self.log_component(k, x)).collect();
        let total = log_sum_exp(&logs);
        (logs.iter().map(|l| (l - total).exp()).collect(), total)
    }

    pub fn avg_log_likelihood(&self, frames: &[Vec<f64>]) -> f64 {
        frames.iter().map(|x| self.posteriors(x).1).sum::<f64>() / frames.len() as f64
    }
}

fn global_variance(frames: &[Vec<f64>]) -> Vec<f64> {
    let n = frames.len() as f64;
    let d = frames[0].len();
    (0..d)
        .map(|j| {
            let mean = frames.iter().map(|f| f[j]).sum::<f64>() / n;
            frames.iter().map(|f| (f[j] - mean).powi(2)).sum::<f64>() / n
        })
        .collect()
}

/// Trains a UBM: k-means initialization, then EM with variance flooring at
/// `1e-4` of the global variance per dimension.
pub fn train_ubm(frames: &[Vec<f64>], mixtures: usize, seed: u64) -> Result<UbmFit> {
    if mixtures == 0 {
        return Err(Error::invalid("UBM needs at least one mixture"));
    }
    if frames.len() < 10 * mixtures {
        return Err(Error::invalid(format!(
            "insufficient frames for a {mixtures}-mixture UBM: {} < {}",
            frames.len(),
            10 * mixtures
        )));
    }
    let d = frames[0].len();
    if let Some(bad) = frames.iter().find(|f| f.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, got: bad.len() });
    }
    let gvar = global_variance(frames);
    let floor: Vec<f64> = gvar.iter().map(|v| (VARIANCE_FLOOR_FRACTION * v).max(MIN_VARIANCE)).collect();

    let book = kmeans_fit(frames, mixtures, seed, 100)?;
    let mut counts = vec![0usize; mixtures];
    let mut sq = vec![vec![0.0; d]; mixtures];
    for f in frames {
        let (k, _) = book.nearest(f);
        counts[k] += 1;
        for j in 0..d {
            sq[k][j] += (f[j] - book.centers[k][j]).powi(2);
        }
    }
    let n = frames.len() as f64;
    let mut gmm = DiagGmm {
        weights: counts.iter().map(|&c| (c as f64).max(1.0) / n).collect(),
        means: book.centers.clone(),
        variances: (0..mixtures)
            .map(|k| {
                (0..d)
                    .map(|j| {
                        let v = if counts[k] > 1 { sq[k][j] / counts[k] as f64 } else { gvar[j] };
                        v.max(floor[j])
                    })
                    .collect()
            })
            .collect(),
    };
    let wsum: f64 = gmm.weights.iter().sum();
    gmm.weights.iter_mut().for_each(|w| *w /= wsum);

    let mut trace = vec![gmm.avg_log_likelihood(frames)];
    for _ in 0..EM_MAX_ITER {
        let mut occ = vec![0.0; mixtures];
        let mut first = vec![vec![0.0; d]; mixtures];
        let mut posts = Vec::with_capacity(frames.len());
        for f in frames {
            let (p, _) = gmm.posteriors(f);
            for k in 0..mixtures {
                occ[k] += p[k];
                for j in 0..d {
                    first[k][j] += p[k] * f[j];
                }
            }
            posts.push(p);
        }
        let mut next = gmm.clone();
        for k in 0..mixtures {
            if occ[k] < 1e-10 {
                continue;
            }
            next.means[k] = first[k].iter().map(|s| s / occ[k]).collect();
        }
        let mut second = vec![vec![0.0; d]; mixtures];
        for (f, p) in frames.iter().zip(&posts) {
            for k in 0..mixtures {
                for j in 0..d {
                    second[k][j] += p[k] * (f[j] - next.means[k][j]).powi(2);
                }
            }
        }
        for k in 0..mixtures {
            if occ[k] < 1e-10 {
                continue;
            }
            next.variances[k] = (0..d).map(|j| (second[k][j] / occ[k]).max(floor[j])).collect();
        }
        let total: f64 = occ.iter().sum();
        next.weights = occ.iter().map(|o| o / total).collect();
        gmm = next;
        let ll = gmm.avg_log_likelihood(frames);
        let gain = ll - trace.last().unwrap();
        trace.push(ll);
        if gain < EM_TOL {
            break;
        }
    }
    Ok(UbmFit { gmm, log_likelihood: trace })
}

/// MAP adaptation of the component means; weights and variances are copied.
pub fn map_adapt(ubm: &DiagGmm, frames: &[Vec<f64>], relevance: f64) -> Result<DiagGmm> {
    if !(relevance > 0.0) {
        return Err(Error::invalid("relevance factor must be positive"));
    }
    if frames.is_empty() {
        return Err(Error::invalid("MAP adaptation needs at least one frame"));
    }
    let (m, d) = (ubm.components(), ubm.dim());
    let mut occ = vec![0.0; m];
    let mut first = vec![vec![0.0; d]; m];
    for f in frames {
        if f.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: f.len() });
        }
        let (p, _) = ubm.posteriors(f);
        for k in 0..m {
            occ[k] += p[k];
            for j in 0..d {
                first[k][j] += p[k] * f[j];
            }
        }
    }
    let mut adapted = ubm.clone();
    for k in 0..m {
        if occ[k] <= 0.0 {
            continue;
        }
        let alpha = occ[k] / (occ[k] + relevance);
        for j in 0..d {
            let data_mean = first[k][j] / occ[k];
            adapted.means[k][j] = alpha * data_mean + (1.0 - alpha) * ubm.means[k][j];
        }
    }
    Ok(adapted)
}

/// Component means concatenated in component order.
pub fn supervector(gmm: &DiagGmm) -> Vec<f64> {
    gmm.means.iter().flatten().copied().collect()
}
