//! Per-segment feature extraction with a resumable on-disk cache.
//!
//! Every segment gets its own `cache/<id>.egf` file, so an interrupted run
//! resumes where it stopped. The merged table is written to `features.egf`.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::{ExperimentConfig, FeatureChannel};
use crate::audio::{self, MfccConfig, TARGET_RATE};
use crate::data::{read_feature_table, write_feature_table, DatasetManifest, FeatureTable, SegmentRecord};
use crate::error::{Error, Result};
use crate::flow::{flow_sequence, read_flows, FlowField, FlowParams};
use crate::frame::load_frames;
use crate::video::{
    compute_cuboids, compute_goff, compute_logc_windows, compute_vif, logc, CuboidParams, GOFF_GRID,
};

pub const FEATURES_FILE: &str = "features.egf";

pub fn cache_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir.join("cache")
}

fn segment_cache(cfg: &ExperimentConfig, id: &str) -> PathBuf {
    let safe: String = id.chars().map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' }).collect();
    cache_dir(cfg).join(format!("{safe}.egf"))
}

/// Thread pool honouring `EGOFUSE_WORKERS` when set.
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("EGOFUSE_WORKERS") {
        let n: usize = v.trim().parse().map_err(|_| Error::config(format!("EGOFUSE_WORKERS={v:?} is not a count")))?;
        if n == 0 {
            return Err(Error::config("EGOFUSE_WORKERS must be >= 1"));
        }
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| Error::config(format!("thread pool: {e}")))
}

fn load_segment_flows(cfg: &ExperimentConfig, seg: &SegmentRecord, frames: &[crate::frame::Frame]) -> Result<Vec<FlowField>> {
    match &cfg.flow_dir {
        Some(dir) => {
            let flows = read_flows(&dir.join(format!("{}.flw", seg.id)))?;
            if flows.len() + 1 != frames.len() {
                return Err(Error::invalid(format!("{} flow fields for {} frames", flows.len(), frames.len())));
            }
            Ok(flows)
        }
        None => flow_sequence(frames, &FlowParams::default()),
    }
}

/// Raw descriptors of one segment, restricted to the enabled channels.
pub fn extract_segment(cfg: &ExperimentConfig, seg: &SegmentRecord) -> Result<FeatureTable> {
    let mut table = FeatureTable::new();
    let id = seg.id.as_str();
    let needs_video = cfg.channels.iter().any(|c| *c != FeatureChannel::Audio);
    if needs_video {
        let frames = load_frames(&seg.frame_dir)?;
        let flows = if cfg.has(FeatureChannel::Goff) || cfg.has(FeatureChannel::LogC) {
            load_segment_flows(cfg, seg, &frames)?
        } else {
            Vec::new()
        };
        if cfg.has(FeatureChannel::Goff) {
            table.insert(FeatureChannel::Goff.cache_name(), id, compute_goff(&flows, GOFF_GRID)?.to_vec())?;
        }
        if cfg.has(FeatureChannel::Vif) {
            table.insert(FeatureChannel::Vif.cache_name(), id, compute_vif(&frames)?.to_vec())?;
        }
        if cfg.has(FeatureChannel::LogC) {
            let window = logc::DEFAULT_WINDOW.min(flows.len());
            let ch = table.channel_mut(FeatureChannel::LogC.cache_name(), logc::LOGC_DIM)?;
            for v in compute_logc_windows(&frames, &flows, window, logc::DEFAULT_STRIDE)? {
                ch.push(id, v)?;
            }
        }
        if cfg.has(FeatureChannel::Cuboid) {
            let params = CuboidParams::default();
            // the channel exists even when nothing is detected
            let ch = table.channel_mut(FeatureChannel::Cuboid.cache_name(), params.descriptor_dim())?;
            if frames.len() >= params.min_frames() {
                for v in compute_cuboids(&frames, &params)?.descriptors {
                    ch.push(id, v)?;
                }
            }
        }
    }
    if cfg.has(FeatureChannel::Audio) {
        if let Some(path) = &seg.audio_path {
            let (samples, rate) = audio::read_wav(path)?;
            let samples = audio::resample(&samples, rate, TARGET_RATE);
            let ch = table.channel_mut(FeatureChannel::Audio.cache_name(), audio::MFCC_DIM)?;
            for row in audio::mfcc(&samples, &MfccConfig::default())? {
                ch.push(id, row)?;
            }
        }
    }
    Ok(table)
}

fn cached_or_extract(cfg: &ExperimentConfig, seg: &SegmentRecord) -> Result<(FeatureTable, bool)> {
    let path = segment_cache(cfg, &seg.id);
    if path.exists() {
        if let Ok(t) = read_feature_table(&path) {
            let complete = cfg.channels.iter().all(|c| {
                t.channel(c.cache_name()).is_some() || (*c == FeatureChannel::Audio && seg.audio_path.is_none())
            });
            if complete {
                return Ok((t, true));
            }
        }
    }
    let t = extract_segment(cfg, seg)?;
    write_feature_table(&t, &path)?;
    Ok((t, false))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ExtractStats {
    pub computed: usize,
    pub cached: usize,
}

/// Extracts (or loads from cache) every segment and writes the merged table.
pub fn extract(cfg: &ExperimentConfig, manifest: &DatasetManifest) -> Result<(FeatureTable, ExtractStats)> {
    std::fs::create_dir_all(cache_dir(cfg)).map_err(|e| Error::io(cache_dir(cfg), e))?;
    let parts: Vec<(FeatureTable, bool)> = worker_pool()?.install(|| {
        manifest
            .segments
            .par_iter()
            .map(|seg| {
                cached_or_extract(cfg, seg).map_err(|e| Error::Segment { id: seg.id.clone(), source: Box::new(e) })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut stats = ExtractStats::default();
    let mut table = FeatureTable::new();
    for (t, hit) in parts {
        if hit {
            stats.cached += 1;
        } else {
            stats.computed += 1;
        }
        table.merge(t)?;
    }
    table.validate_ids(manifest)?;
    write_feature_table(&table, &features_path(&cfg.output_dir))?;
    Ok((table, stats))
}

pub fn features_path(output_dir: &Path) -> PathBuf {
    output_dir.join(FEATURES_FILE)
}
