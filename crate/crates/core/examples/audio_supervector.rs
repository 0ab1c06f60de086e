//! MFCC frames, a universal background model, and MAP-adapted supervectors
//! for noisy tones of different pitch.
//!
//! `cargo run --release --example audio_supervector`

use egofuse::audio::{map_adapt, mfcc, supervector, train_ubm, MfccConfig, RELEVANCE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noisy_tone(freq: f64, seconds: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = (24_000.0 * seconds) as usize;
    (0..n).map(|i| 0.4 * (std::f64::consts::TAU * freq * i as f64 / 24_000.0).sin() + rng.random_range(-0.1..0.1)).collect()
}

fn main() -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cfg = MfccConfig::default();
    let background: Vec<Vec<f64>> = [300.0, 600.0, 1200.0, 2400.0]
        .iter()
        .map(|&f| mfcc(&noisy_tone(f, 1.0, &mut rng), &cfg))
        .collect::<Result<Vec<_>, _>>()?
        .concat();
    let ubm = train_ubm(&background, 16, 1)?;
    let ll = &ubm.log_likelihood;
    println!("UBM: 16 mixtures over {} frames, log-likelihood {:.2} -> {:.2} in {} EM steps", background.len(), ll[0], ll[ll.len() - 1], ll.len() - 1);

    let base = supervector(&ubm.gmm);
    for f in [300.0, 450.0, 2400.0, 4000.0] {
        let frames = mfcc(&noisy_tone(f, 0.5, &mut rng), &cfg)?;
        let sv = supervector(&map_adapt(&ubm.gmm, &frames, RELEVANCE)?);
        let shift = sv.iter().zip(&base).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        println!("{f:>6} Hz: {} frames, supervector {} dims, distance from UBM {shift:.2}", frames.len(), sv.len());
    }
    Ok(())
}
