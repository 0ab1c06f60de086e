use std::path::Path;
use std::process::Command;

use egofuse::data::load_manifest;
use egofuse::flow::{flow_sequence, FlowParams};
use egofuse::frame::load_frames;
use egofuse::harness::{self, Classifier, ExperimentConfig, FeatureChannel};
use egofuse::video::{compute_goff, compute_vif, GOFF_GRID};

/// Flow-free channels keep these tests fast.
fn light_config(data: &Path, out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(data.join(harness::synth::MANIFEST_FILE), out);
    cfg.channels = vec![FeatureChannel::Vif, FeatureChannel::Audio];
    cfg.trials = 3;
    cfg.seed = 9;
    cfg
}

const LIGHT: [Classifier; 3] = [Classifier::SvmPoly, Classifier::SimpleMkl, Classifier::MkBoost];

#[test]
fn synthetic_corpus_motion_and_silence() {
    let dir = tempfile::tempdir().unwrap();
    let m = harness::synth_dataset(4, dir.path()).unwrap();
    assert_eq!(m.segments.len(), 48);
    assert_eq!(m.class_counts(), vec![12; 4]);

    let right = load_frames(&m.segment("right00").unwrap().frame_dir).unwrap();
    let g = compute_goff(&flow_sequence(&right, &FlowParams::default()).unwrap(), GOFF_GRID).unwrap();
    // rightward motion lands near 0°, leftward near 180°
    let near = |h: &[f64], c: usize| (0..3).map(|d| h[(c + 36 + d - 1) % 36]).sum::<f64>();
    assert!(near(&g.mdhf, 0) > near(&g.mdhf, 18), "mdhf {:?}", g.mdhf);

    let left = load_frames(&m.segment("left00").unwrap().frame_dir).unwrap();
    let g = compute_goff(&flow_sequence(&left, &FlowParams::default()).unwrap(), GOFF_GRID).unwrap();
    assert!(near(&g.mdhf, 18) > near(&g.mdhf, 0), "mdhf {:?}", g.mdhf);

    let still = load_frames(&m.segment("static00").unwrap().frame_dir).unwrap();
    let v = compute_vif(&still).unwrap();
    assert!(v.zc.iter().all(|&z| z == 0.0));
}

#[test]
fn runs_are_reproducible_and_cache_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let manifest = harness::synth_dataset(2, &data).unwrap();

    let cfg = light_config(&data, &dir.path().join("a"));
    let (table, stats) = harness::extract(&cfg, &manifest).unwrap();
    assert_eq!((stats.computed, stats.cached), (48, 0));
    let (again, stats) = harness::extract(&cfg, &manifest).unwrap();
    assert_eq!((stats.computed, stats.cached), (0, 48));
    assert_eq!(again, table);

    // a removed cache entry is recomputed on its own
    let entry = harness::cache_dir(&cfg).join("zoom03.egf");
    std::fs::remove_file(&entry).unwrap();
    let (_, stats) = harness::extract(&cfg, &manifest).unwrap();
    assert_eq!((stats.computed, stats.cached), (1, 47));

    let first = harness::run_trials(&cfg, &manifest, &table, &LIGHT).unwrap();
    let second = harness::run_trials(&cfg, &manifest, &table, &LIGHT).unwrap();
    assert_eq!(first, second);
    for run in &first {
        assert_eq!(run.failed(), 0, "{}: {:?}", run.classifier, run.trials.iter().map(|t| &t.error).collect::<Vec<_>>());
        assert_eq!(run.leaks(), 0);
        assert!(run.trials.iter().all(|t| t.fit_accesses > 0));
    }
    let seeds: Vec<u64> = first[0].trials.iter().map(|t| t.seed).collect();
    assert!(seeds.windows(2).all(|w| w[0] != w[1]));

    // results survive a write/read roundtrip and render reports
    harness::write_results(&cfg.output_dir, &first).unwrap();
    assert_eq!(harness::read_results(&cfg.output_dir).unwrap(), first);
    let written = harness::report(&cfg.output_dir).unwrap();
    assert!(written.iter().any(|p| p.ends_with("comparison.csv")));
    let csv = std::fs::read_to_string(cfg.output_dir.join("comparison.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "classifier,A,P,R,κ,SIC,F");
    assert_eq!(csv.lines().count(), 1 + LIGHT.len());
    assert!(cfg.output_dir.join("selection_kernels_mkboost.csv").exists());
}

fn egofuse(args: &[&str], workers: Option<&str>) -> std::process::Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_egofuse"));
    cmd.args(args);
    if let Some(w) = workers {
        cmd.env("EGOFUSE_WORKERS", w);
    }
    cmd.output().unwrap()
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let conf = d.join("bad.conf");
    std::fs::write(&conf, "manifest = m.tsv\noutput_dir = out\nbogus = 1\n").unwrap();
    let out = egofuse(&["run", "--config", conf.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));

    std::fs::write(&conf, "manifest = missing.tsv\noutput_dir = out\n").unwrap();
    let out = egofuse(&["extract", "--config", conf.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));

    let data = d.join("data");
    let out = egofuse(&["synth", "--seed", "5", "--out", data.to_str().unwrap()], Some("1"));
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(load_manifest(&data.join("manifest.tsv")).unwrap().segments.len(), 48);

    std::fs::write(&conf, "manifest = data/manifest.tsv\noutput_dir = out\nchannels = VIF\n").unwrap();
    let out = egofuse(&["extract", "--config", conf.to_str().unwrap()], Some("zero"));
    assert_eq!(out.status.code(), Some(2));

    let out = egofuse(&["report", "--in", d.join("nothing").to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(3));
}
