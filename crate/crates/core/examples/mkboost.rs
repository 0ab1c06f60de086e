//! MKBoost over a small kernel bank: per-round choices, the training error
//! bound, and the kernel selection histogram.
//!
//! `cargo run --release --example mkboost`

use egofuse::kernels::{gram, median_heuristic_gamma, normalize, BankEntry, KernelSpec};
use egofuse::mkboost::{boost_predict, mkboost_train, selection_histogram, training_error_bound, BoostParams};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 80;
    let y: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let a: Vec<Vec<f64>> = y.iter().map(|&l| vec![0.8 * l + rng.random_range(-1.0..1.0)]).collect();
    let b: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();

    let mut bank = Vec::new();
    let mut grams: Vec<DMatrix<f64>> = Vec::new();
    for (channel, rows) in [("A", &a), ("B", &b)] {
        for spec in [KernelSpec::polynomial(), KernelSpec::Rbf { gamma: median_heuristic_gamma(rows) }] {
            grams.push(normalize(&gram(&spec, rows)?)?.k);
            bank.push(BankEntry { name: format!("{}:{channel}", spec.kind()), spec, channels: vec![channel.into()] });
        }
    }
    let refs: Vec<&DMatrix<f64>> = grams.iter().collect();
    let ens = mkboost_train(&refs, &y, BoostParams { rounds: 12, seed: 5, ..BoostParams::default() })?;
    for (t, r) in ens.rounds.iter().enumerate() {
        println!("round {t:>2}: {:<12} error {:.3} weight {:.3}", bank[r.kernel].name, r.error, r.weight);
    }
    let pred = boost_predict(&ens, &refs)?;
    let err = pred.iter().zip(&y).filter(|(p, y)| p != y).count() as f64 / n as f64;
    println!("training error {err:.3}, bound {:.3}", training_error_bound(&ens));
    print!("{}", selection_histogram([&ens], &bank).kernel_csv());
    Ok(())
}
