//! Normalized kernels and a one-vs-rest SVM on three Gaussian blobs, with C
//! chosen by cross-validation.
//!
//! `cargo run --release --example kernels_svm`

use egofuse::kernels::{cross_gram, gram, median_heuristic_gamma, normalize, KernelSpec};
use egofuse::svm::{predict_multiclass, select_c, train_one_vs_rest, C_GRID, CV_FOLDS, DEFAULT_TOL};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn blobs(n: usize, rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<usize>) {
    let centers = [(0.0, 0.0), (3.0, 0.0), (1.5, 2.5)];
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..n {
        let c = i % 3;
        x.push(vec![centers[c].0 + rng.random_range(-1.0..1.0), centers[c].1 + rng.random_range(-1.0..1.0)]);
        y.push(c);
    }
    (x, y)
}

fn main() -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (train, ty) = blobs(60, &mut rng);
    let (test, sy) = blobs(30, &mut rng);
    for spec in [KernelSpec::Linear, KernelSpec::polynomial(), KernelSpec::Rbf { gamma: median_heuristic_gamma(&train) }] {
        let k = normalize(&gram(&spec, &train)?)?;
        let (c, cv) = select_c(&k.k, &ty, 3, &C_GRID, CV_FOLDS, 7)?;
        let model = train_one_vs_rest(&k.k, &ty, 3, c, DEFAULT_TOL)?;
        let pred = predict_multiclass(&model, &cross_gram(&k, &train, &test)?)?;
        let acc = pred.iter().zip(&sy).filter(|(p, t)| p == t).count() as f64 / sy.len() as f64;
        println!("{:>10}: C = {c:<5} (cv {:?}) test accuracy {acc:.3}", spec.kind(), cv.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>());
    }
    Ok(())
}
