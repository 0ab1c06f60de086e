//! Global (GOFF, VIF) and local (Log-C, cuboid) video descriptors for one
//! synthetic segment.
//!
//! `cargo run --release --example video_features`

use egofuse::flow::{flow_sequence, FlowParams};
use egofuse::frame::load_frames;
use egofuse::harness::synth_dataset;
use egofuse::video::{compute_cuboids, compute_goff, compute_logc_windows, compute_vif, logc, CuboidParams, GOFF_GRID};

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let manifest = synth_dataset(0, dir.path())?;
    for id in ["right00", "zoom00", "static00"] {
        let seg = manifest.segment(id).expect("synthetic id");
        let frames = load_frames(&seg.frame_dir)?;
        let flows = flow_sequence(&frames, &FlowParams::default())?;
        let goff = compute_goff(&flows, GOFF_GRID)?;
        let vif = compute_vif(&frames)?;
        let logc = compute_logc_windows(&frames, &flows, logc::DEFAULT_WINDOW, logc::DEFAULT_STRIDE)?;
        let cuboids = compute_cuboids(&frames, &CuboidParams::default())?;
        let peak = match goff.mdhf.iter().enumerate().filter(|(_, &m)| m > 0.0).max_by(|a, b| a.1.total_cmp(b.1)) {
            Some((i, _)) => format!("{}°", i * 10),
            None => "none".to_string(),
        };
        println!(
            "{id:>9}: GOFF {} dims (dominant direction {peak}), VIF {} dims, {} Log-C windows of {}, {} cuboids of {}",
            goff.to_vec().len(),
            vif.to_vec().len(),
            logc.len(),
            logc.first().map_or(0, |w| w.len()),
            cuboids.descriptors.len(),
            cuboids.descriptors.first().map_or(0, |d| d.len()),
        );
    }
    Ok(())
}
