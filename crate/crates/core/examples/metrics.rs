//! Confusion matrix and the reported scores for a handful of predictions.
//!
//! `cargo run --example metrics`

use egofuse::metrics::{confusion, evaluate, MetricsReport};

fn main() -> anyhow::Result<()> {
    let names: Vec<String> = ["walk", "talk", "wave"].iter().map(|s| s.to_string()).collect();
    let truth = [0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2];
    let pred = [0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 0, 2];
    let cm = confusion(&truth, &pred, 3)?;
    print!("{}", cm.render(&names));
    let r = evaluate(&cm)?;
    println!("{}", MetricsReport::CSV_HEADER);
    println!("{}", r.csv_fields());
    Ok(())
}
