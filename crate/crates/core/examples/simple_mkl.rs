//! SimpleMKL weighting an informative kernel against a noise kernel.
//!
//! `cargo run --release --example simple_mkl`

use egofuse::kernels::{gram, median_heuristic_gamma, normalize, KernelSpec};
use egofuse::mkl::{simple_mkl_train, MklParams};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 60;
    let y: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let signal: Vec<Vec<f64>> = y.iter().map(|&l| vec![1.5 * l + rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
    let noise: Vec<Vec<f64>> = (0..n).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();

    let mut specs = Vec::new();
    let mut grams: Vec<DMatrix<f64>> = Vec::new();
    for rows in [&signal, &noise] {
        for spec in [KernelSpec::Linear, KernelSpec::Rbf { gamma: median_heuristic_gamma(rows) }] {
            grams.push(normalize(&gram(&spec, rows)?)?.k);
            specs.push(spec);
        }
    }
    let refs: Vec<&DMatrix<f64>> = grams.iter().collect();
    let model = simple_mkl_train(&refs, &y, &specs, MklParams::default())?;
    let names = ["linear:signal", "rbf:signal", "linear:noise", "rbf:noise"];
    for (name, d) in names.iter().zip(&model.weights) {
        println!("{name:>14}: d = {d:.4}");
    }
    println!("J per outer step: {:?}", model.objective_trace.iter().map(|j| format!("{j:.4}")).collect::<Vec<_>>());
    Ok(())
}
