//! Codebooks, bag-of-words histograms, PCA and per-dimension scaling.
//!
//! Every model here is fitted on training rows only and then applied
//! unchanged to held-out rows.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{Channel, FeatureTable};
use crate::error::{Error, Result};

pub const LOGC_CODEBOOK: usize = 300;
pub const CUBOID_CODEBOOK: usize = 500;
pub const PCA_DIM: usize = 128;
pub const CUBOID_PCA_DIM: usize = 100;
pub const KMEANS_MAX_ITER: usize = 100;

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_dims(rows: &[Vec<f64>], dim: usize) -> Result<()> {
    match rows.iter().find(|r| r.len() != dim) {
        Some(r) => Err(Error::DimensionMismatch { expected: dim, got: r.len() }),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub centers: Vec<Vec<f64>>,
    pub seed: u64,
}

impl Codebook {
    pub fn k(&self) -> usize {
        self.centers.len()
    }

    pub fn dim(&self) -> usize {
        self.centers[0].len()
    }

    /// Nearest center, ties to the lowest index.
    pub fn nearest(&self, v: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, c) in self.centers.iter().enumerate() {
            let d = sq_dist(v, c);
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    pub fn distortion(&self, rows: &[Vec<f64>]) -> f64 {
        rows.par_iter().map(|r| self.nearest(r).1).sum()
    }

    pub fn to_channel(&self) -> Channel {
        Channel {
            dim: self.dim(),
            rows: self.centers.iter().map(|c| (format!("seed:{}", self.seed), c.clone())).collect(),
        }
    }

    pub fn from_channel(ch: &Channel) -> Result<Self> {
        let seed = ch
            .rows
            .first()
            .and_then(|(id, _)| id.strip_prefix("seed:"))
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::CorruptCache("codebook channel without seed".into()))?;
        Ok(Codebook { centers: ch.rows.iter().map(|(_, v)| v.clone()).collect(), seed })
    }
}

/// Fitted codebook plus the distortion after initialization and after each
/// Lloyd iteration.
#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub codebook: Codebook,
    pub distortions: Vec<f64>,
    pub iterations: usize,
}

fn kmeans_pp(rows: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centers = vec![rows[rng.random_range(0..rows.len())].clone()];
    let mut d2: Vec<f64> = rows.iter().map(|r| sq_dist(r, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = d2.iter().rposition(|&d| d > 0.0).unwrap();
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            rng.random_range(0..rows.len())
        };
        let c = rows[idx].clone();
        for (d, r) in d2.iter_mut().zip(rows) {
            *d = d.min(sq_dist(r, &c));
        }
        centers.push(c);
    }
    centers
}

pub fn kmeans_fit(rows: &[Vec<f64>], k: usize, seed: u64, max_iter: usize) -> Result<Codebook> {
    kmeans_fit_traced(rows, k, seed, max_iter).map(|f| f.codebook)
}

/// k-means++ seeding followed by Lloyd iterations until the assignment
/// stops changing or `max_iter` is reached. Empty clusters keep their center.
pub fn kmeans_fit_traced(rows: &[Vec<f64>], k: usize, seed: u64, max_iter: usize) -> Result<KMeansFit> {
    if k == 0 {
        return Err(Error::invalid("k-means needs k >= 1"));
    }
    if rows.len() < k {
        return Err(Error::invalid(format!("k-means needs n >= k, got n={} k={k}", rows.len())));
    }
    let dim = rows[0].len();
    if dim == 0 {
        return Err(Error::invalid("k-means needs d >= 1"));
    }
    check_dims(rows, dim)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut book = Codebook { centers: kmeans_pp(rows, k, &mut rng), seed };
    let mut assign: Vec<usize> = rows.par_iter().map(|r| book.nearest(r).0).collect();
    let mut distortions = vec![book.distortion(rows)];
    let mut iterations = 0;
    for _ in 0..max_iter {
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (r, &a) in rows.iter().zip(&assign) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(r) {
                *s += x;
            }
        }
        for ((c, s), &n) in book.centers.iter_mut().zip(sums).zip(&counts) {
            if n > 0 {
                *c = s.into_iter().map(|x| x / n as f64).collect();
            }
        }
        let next: Vec<usize> = rows.par_iter().map(|r| book.nearest(r).0).collect();
        distortions.push(book.distortion(rows));
        if next == assign {
            break;
        }
        assign = next;
    }
    Ok(KMeansFit { codebook: book, distortions, iterations })
}

/// L1-normalized histogram of nearest-center assignments. An empty set
/// encodes to the uniform histogram.
pub fn bow_encode(rows: &[Vec<f64>], book: &Codebook) -> Result<Vec<f64>> {
    let k = book.k();
    if rows.is_empty() {
        return Ok(vec![1.0 / k as f64; k]);
    }
    check_dims(rows, book.dim())?;
    let mut h = vec![0.0; k];
    for r in rows {
        h[book.nearest(r).0] += 1.0;
    }
    let n = rows.len() as f64;
    h.iter_mut().for_each(|x| *x /= n);
    Ok(h)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Retained {
    Count(usize),
    /// Smallest number of components explaining at least this fraction.
    Fraction(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `d × r`, orthonormal columns.
    pub basis: DMatrix<f64>,
    pub explained_variance: Vec<f64>,
    pub total_variance: f64,
}

pub fn pca_fit(rows: &[Vec<f64>], retained: Retained) -> Result<PcaModel> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::invalid("PCA needs at least 2 rows"));
    }
    let d = rows[0].len();
    check_dims(rows, d)?;
    let max_r = (n - 1).min(d);
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let centered = DMatrix::from_fn(n, d, |i, j| rows[i][j] - mean[j]);
    let cov = (centered.transpose() * &centered) / (n as f64 - 1.0);
    let total_variance = cov.trace();
    let eig = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap().then(a.cmp(&b)));

    let r = match retained {
        Retained::Count(r) => {
            if r == 0 || r > max_r {
                return Err(Error::invalid(format!("PCA retained {r} outside 1..={max_r}")));
            }
            r
        }
        Retained::Fraction(f) => {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::invalid(format!("PCA variance fraction {f} outside (0, 1]")));
            }
            let mut acc = 0.0;
            let mut r = max_r;
            for (i, &j) in order.iter().enumerate().take(max_r) {
                acc += eig.eigenvalues[j].max(0.0);
                if acc >= f * total_variance {
                    r = i + 1;
                    break;
                }
            }
            r
        }
    };
    let mut basis = DMatrix::zeros(d, r);
    for (c, &j) in order.iter().take(r).enumerate() {
        let mut col = eig.eigenvectors.column(j).into_owned();
        // deterministic sign: largest-magnitude entry positive
        let pivot = col.iter().cloned().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if pivot < 0.0 {
            col = -col;
        }
        basis.set_column(c, &col);
    }
    let explained_variance = order.iter().take(r).map(|&j| eig.eigenvalues[j].max(0.0)).collect();
    Ok(PcaModel { mean, basis, explained_variance, total_variance })
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.mean.len() {
            return Err(Error::DimensionMismatch { expected: self.mean.len(), got: v.len() });
        }
        let c = DVector::from_iterator(v.len(), v.iter().zip(&self.mean).map(|(x, m)| x - m));
        Ok((self.basis.transpose() * c).iter().copied().collect())
    }

    pub fn reconstruct(&self, z: &[f64]) -> Vec<f64> {
        let x = &self.basis * DVector::from_column_slice(z);
        x.iter().zip(&self.mean).map(|(a, m)| a + m).collect()
    }

    pub fn write_into(&self, table: &mut FeatureTable, name: &str) -> Result<()> {
        let d = self.mean.len();
        table.insert(&format!("model:{name}:mean"), "mean", self.mean.clone())?;
        for c in 0..self.dim() {
            table.insert(&format!("model:{name}:basis"), "basis", self.basis.column(c).iter().copied().collect())?;
        }
        let mut var = self.explained_variance.clone();
        var.push(self.total_variance);
        table.insert(&format!("model:{name}:variance"), "variance", var)?;
        debug_assert_eq!(table.channel(&format!("model:{name}:basis")).map(|c| c.dim), Some(d));
        Ok(())
    }

    pub fn read_from(table: &FeatureTable, name: &str) -> Result<Self> {
        let get = |part: &str| {
            table
                .channel(&format!("model:{name}:{part}"))
                .ok_or_else(|| Error::CorruptCache(format!("missing model:{name}:{part}")))
        };
        let mean = get("mean")?.rows[0].1.clone();
        let cols: Vec<&Vec<f64>> = get("basis")?.rows.iter().map(|(_, v)| v).collect();
        let basis = DMatrix::from_fn(mean.len(), cols.len(), |i, j| cols[j][i]);
        let mut var = get("variance")?.rows[0].1.clone();
        let total_variance = var.pop().unwrap_or(0.0);
        Ok(PcaModel { mean, basis, explained_variance: var, total_variance })
    }
}

/// Per-dimension division by the training standard deviation.
/// Dimensions with zero variance pass through unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub scale: Vec<f64>,
}

const MIN_STD: f64 = 1e-12;

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::invalid("standardizer needs at least one row"));
        };
        let d = first.len();
        check_dims(rows, d)?;
        let n = rows.len() as f64;
        let scale = (0..d)
            .map(|j| {
                let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
                let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
                let sd = var.sqrt();
                if sd > MIN_STD { sd } else { 1.0 }
            })
            .collect();
        Ok(Standardizer { scale })
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(&self.scale).map(|(x, s)| x / s).collect()
    }

    pub fn apply_all(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.apply(r)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn blobs(n: usize, seed: u64) -> (Vec<Vec<f64>>, [Vec<f64>; 2]) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut rows = Vec::new();
        let mut means = [vec![0.0; 2], vec![0.0; 2]];
        for (b, centre) in [[-20.0, 0.0], [20.0, 5.0]].iter().enumerate() {
            for _ in 0..n {
                let p = vec![centre[0] + noise.sample(&mut rng), centre[1] + noise.sample(&mut rng)];
                means[b][0] += p[0] / n as f64;
                means[b][1] += p[1] / n as f64;
                rows.push(p);
            }
        }
        (rows, means)
    }

    #[test]
    fn n_equals_k_gives_zero_distortion() {
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let book = kmeans_fit(&rows, 6, 3, 100).unwrap();
        assert_eq!(book.distortion(&rows), 0.0);
        let mut c = book.centers.clone();
        c.sort_by(|a, b| a.partial_cmp(b).unwrap());
        c.dedup();
        assert_eq!(c.len(), 6);
    }

    #[test]
    fn two_blobs_recover_means() {
        let n = 200;
        let (rows, means) = blobs(n, 11);
        let book = kmeans_fit(&rows, 2, 5, 100).unwrap();
        let tol = 3.0 * 1.0 / (n as f64).sqrt();
        for m in &means {
            let (i, _) = book.nearest(m);
            assert!(sq_dist(&book.centers[i], m).sqrt() < tol);
        }
    }

    #[test]
    fn deterministic_and_monotone() {
        let (rows, _) = blobs(50, 2);
        let a = kmeans_fit_traced(&rows, 7, 9, 100).unwrap();
        let b = kmeans_fit_traced(&rows, 7, 9, 100).unwrap();
        assert_eq!(a.codebook, b.codebook);
        for w in a.distortions.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
    }

    #[test]
    fn kmeans_errors() {
        let rows = vec![vec![1.0], vec![2.0]];
        assert!(kmeans_fit(&rows, 3, 0, 10).is_err());
        assert!(kmeans_fit(&[vec![1.0], vec![1.0, 2.0]], 1, 0, 10).is_err());
    }

    #[test]
    fn bow_cases() {
        let book = Codebook { centers: (0..300).map(|i| vec![i as f64]).collect(), seed: 0 };
        let h = bow_encode(&[vec![41.2]], &book).unwrap();
        assert_eq!(h[41], 1.0);
        let near3: Vec<Vec<f64>> = (0..10).map(|i| vec![3.0 + 0.01 * i as f64]).collect();
        let h = bow_encode(&near3, &book).unwrap();
        assert_eq!(h[3], 1.0);
        assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let empty = bow_encode(&[], &book).unwrap();
        assert!(empty.iter().all(|&x| (x - 1.0 / 300.0).abs() < 1e-15));
        assert!(bow_encode(&[vec![1.0, 2.0]], &book).is_err());
        // tie between centers 0 and 1 goes to 0
        let tie = bow_encode(&[vec![0.5]], &book).unwrap();
        assert_eq!(tie[0], 1.0);
    }

    #[test]
    fn pca_collinear_and_mean() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, 2.0 * i as f64 + 1.0]).collect();
        let m = pca_fit(&rows, Retained::Count(1)).unwrap();
        assert!(m.explained_variance[0] / m.total_variance >= 0.9999);
        let z = m.project(&m.mean).unwrap();
        assert!(z.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn pca_full_rank_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows: Vec<Vec<f64>> = (0..20).map(|_| (0..5).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let m = pca_fit(&rows, Retained::Count(5)).unwrap();
        let btb = m.basis.transpose() * &m.basis;
        assert!((btb - DMatrix::identity(5, 5)).abs().max() < 1e-10);
        for w in m.explained_variance.windows(2) {
            assert!(w[0] >= w[1]);
        }
        let sum: f64 = m.explained_variance.iter().sum();
        assert!((sum - m.total_variance).abs() <= 1e-8 * m.total_variance);
        for r in &rows {
            let back = m.reconstruct(&m.project(r).unwrap());
            assert!(sq_dist(&back, r).sqrt() < 1e-9);
        }
    }

    #[test]
    fn pca_retained_bounds() {
        let rows: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64, 1.0, (i % 2) as f64]).collect();
        assert!(pca_fit(&rows, Retained::Count(4)).is_err());
        assert!(pca_fit(&rows, Retained::Count(3)).is_ok());
        assert!(pca_fit(&rows[..1], Retained::Count(1)).is_err());
        let m = pca_fit(&rows, Retained::Fraction(0.5)).unwrap();
        assert_eq!(m.dim(), 1);
    }

    #[test]
    fn pca_roundtrips_through_table() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, (i * i) as f64, 1.0 / (1.0 + i as f64)]).collect();
        let m = pca_fit(&rows, Retained::Count(2)).unwrap();
        let mut t = FeatureTable::new();
        m.write_into(&mut t, "logc").unwrap();
        let t = FeatureTable::from_bytes(&t.to_bytes()).unwrap();
        assert_eq!(PcaModel::read_from(&t, "logc").unwrap(), m);
    }

    #[test]
    fn codebook_roundtrips_through_channel() {
        let book = Codebook { centers: vec![vec![1.0, 2.0], vec![3.0, 4.0]], seed: 77 };
        assert_eq!(Codebook::from_channel(&book.to_channel()).unwrap(), book);
    }

    #[test]
    fn standardizer_cases() {
        let rows = vec![vec![5.0, 0.0], vec![5.0, 4.0], vec![5.0, 0.0], vec![5.0, 4.0]];
        let s = Standardizer::fit(&rows).unwrap();
        assert_eq!(s.apply(&[5.0, 4.0]), vec![5.0, 2.0]);
        let out = s.apply_all(&rows);
        let col: Vec<f64> = out.iter().map(|r| r[1]).collect();
        let mean = col.iter().sum::<f64>() / 4.0;
        let sd = (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0).sqrt();
        assert!((sd - 1.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn bow_is_permutation_invariant(
            pts in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 2), 1..30),
            seed in any::<u64>(),
        ) {
            let book = Codebook { centers: vec![vec![0.0, 0.0], vec![2.0, 2.0], vec![-3.0, 1.0]], seed: 0 };
            let h1 = bow_encode(&pts, &book).unwrap();
            let mut shuffled = pts.clone();
            use rand::seq::SliceRandom;
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let h2 = bow_encode(&shuffled, &book).unwrap();
            prop_assert_eq!(h1, h2);
        }
    }
}
