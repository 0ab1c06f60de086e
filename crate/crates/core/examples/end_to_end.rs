//! Synthetic corpus, feature extraction and a short repeated-split
//! comparison of all four classifiers.
//!
//! `cargo run --release --example end_to_end -- [trials]`

use egofuse::harness::{self, Classifier, ExperimentConfig};

fn main() -> anyhow::Result<()> {
    let trials: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(3);
    let dir = tempfile::tempdir()?;
    let data = dir.path().join("data");
    let manifest = harness::synth_dataset(0, &data)?;
    let mut cfg = ExperimentConfig::new(data.join(harness::synth::MANIFEST_FILE), dir.path().join("out"));
    cfg.trials = trials;

    let (table, stats) = harness::extract(&cfg, &manifest)?;
    println!("extracted {} segments", stats.computed);
    let runs = harness::run_trials(&cfg, &manifest, &table, &Classifier::ALL)?;
    print!("{}", harness::report::comparison_table(&runs));
    for run in &runs {
        println!("{}: {} failed trials, {} leaked accesses", run.classifier, run.failed(), run.leaks());
    }
    Ok(())
}
