//! The repeated-split evaluation protocol.
//!
//! Each trial draws a stratified split, fits every encoder (codebooks, PCA,
//! UBM, standardizers, Gram normalization, C selection) on the training
//! segments only, and evaluates the configured classifiers on the test
//! segments. Every segment access made while fitting is written to an audit
//! log, which is checked against the split afterwards.
//!
//! Trial seeds come from a ChaCha8 stream keyed by the master seed, with
//! the trial index as the stream id, so trials are independent of each other
//! and of the order they run in.

use std::collections::HashMap;
use std::sync::Mutex;

use nalgebra::DMatrix;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Classifier, ExperimentConfig, FeatureChannel, KernelKind};
use super::extract::worker_pool;
use crate::audio::{map_adapt, supervector, train_ubm, RELEVANCE};
use crate::data::{stratified_split, Channel, DatasetManifest, FeatureTable, SplitPlan};
use crate::encoding::{bow_encode, kmeans_fit, pca_fit, Retained, Standardizer, KMEANS_MAX_ITER};
use crate::error::{Error, Result};
use crate::kernels::{cross_gram, gram, median_heuristic_gamma, normalize, BankEntry, KernelSpec};
use crate::metrics::{confusion, evaluate, ConfusionMatrix, MetricsReport};
use crate::mkboost::{self, BoostParams, SelectionHistogram};
use crate::mkl::{self, MklParams};
use crate::svm::{self, SvmParams};

/// Largest tolerated fraction of failed trials.
pub const MAX_FAILED_FRACTION: f64 = 0.1;

/// Codebooks never exceed a third of the training descriptors, so every
/// center is backed by several samples on small corpora.
const MIN_VECTORS_PER_CENTER: usize = 3;

pub fn trial_seed(master: u64, trial: usize) -> u64 {
    stream_seed(master, trial as u64)
}

fn stream_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

// Sub-seed tags within a trial.
const SEED_SPLIT: u64 = 0;
const SEED_LOGC: u64 = 1;
const SEED_CUBOID: u64 = 2;
const SEED_UBM: u64 = 3;
const SEED_CV: u64 = 4;
const SEED_BOOST: u64 = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub phase: String,
    pub id: String,
}

/// Segment accesses per phase. Phases starting with `fit:` must only see
/// training segments.
#[derive(Debug, Default)]
pub struct Audit {
    entries: Mutex<Vec<AuditEntry>>,
}

impl Audit {
    pub fn record<'a>(&self, phase: &str, ids: impl IntoIterator<Item = &'a String>) {
        let mut e = self.entries.lock().unwrap_or_else(|p| p.into_inner());
        e.extend(ids.into_iter().map(|id| AuditEntry { phase: phase.to_string(), id: id.clone() }));
    }

    pub fn entries(&self) -> Vec<AuditEntry> {
        self.entries.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }

    pub fn fit_accesses(&self) -> usize {
        self.entries().iter().filter(|e| e.phase.starts_with("fit:")).count()
    }

    /// Fit-phase accesses to test segments.
    pub fn leaks(&self, split: &SplitPlan) -> Vec<AuditEntry> {
        self.entries().into_iter().filter(|e| e.phase.starts_with("fit:") && split.is_test(&e.id)).collect()
    }
}

type Rows = Vec<Vec<f64>>;

/// A channel's rows for the training segments, then the test segments.
pub type ChannelSplit = (FeatureChannel, Vec<Vec<f64>>, Vec<Vec<f64>>);

/// Per-trial feature representations shared by all classifiers.
#[derive(Debug)]
pub struct PreparedTrial {
    pub trial: usize,
    pub seed: u64,
    pub split: SplitPlan,
    pub train_labels: Vec<usize>,
    pub test_labels: Vec<usize>,
    /// Standardized vectors (PCA'd for histogram channels), train then test.
    pub vectors: Vec<ChannelSplit>,
    /// Raw BoW histograms, train then test.
    pub histograms: Vec<ChannelSplit>,
    pub audit: Audit,
}

fn group(ch: &Channel) -> HashMap<&str, Vec<Vec<f64>>> {
    let mut m: HashMap<&str, Vec<Vec<f64>>> = HashMap::new();
    for (id, v) in &ch.rows {
        m.entry(id.as_str()).or_default().push(v.clone());
    }
    m
}

fn channel(table: &FeatureTable, ch: FeatureChannel) -> Result<&Channel> {
    table
        .channel(ch.cache_name())
        .ok_or_else(|| Error::invalid(format!("feature table lacks channel {}", ch.cache_name())))
}

fn single_rows(groups: &HashMap<&str, Vec<Vec<f64>>>, ids: &[String], ch: FeatureChannel) -> Result<Vec<Vec<f64>>> {
    ids.iter()
        .map(|id| {
            groups
                .get(id.as_str())
                .and_then(|r| r.first().cloned())
                .ok_or_else(|| Error::invalid(format!("segment {id:?} missing from channel {ch}")))
        })
        .collect()
}

fn pooled(groups: &HashMap<&str, Vec<Vec<f64>>>, ids: &[String]) -> Vec<Vec<f64>> {
    ids.iter().flat_map(|id| groups.get(id.as_str()).cloned().unwrap_or_default()).collect()
}

fn sets(groups: &HashMap<&str, Vec<Vec<f64>>>, ids: &[String]) -> Vec<Vec<Vec<f64>>> {
    ids.iter().map(|id| groups.get(id.as_str()).cloned().unwrap_or_default()).collect()
}

fn codebook_size(requested: usize, n: usize) -> usize {
    requested.min(n / MIN_VECTORS_PER_CENTER).max(1)
}

fn standardize(audit: &Audit, phase: &str, ids: &[String], train: Vec<Vec<f64>>, test: Vec<Vec<f64>>) -> Result<(Rows, Rows)> {
    audit.record(&format!("fit:standardize:{phase}"), ids);
    let s = Standardizer::fit(&train)?;
    Ok((s.apply_all(&train), s.apply_all(&test)))
}

/// PCA of BoW histograms, keeping at most `dim` components.
fn reduce(audit: &Audit, phase: &str, ids: &[String], train: &[Vec<f64>], test: &[Vec<f64>], dim: usize) -> Result<(Rows, Rows)> {
    audit.record(&format!("fit:pca:{phase}"), ids);
    let r = dim.min(train.len().saturating_sub(1)).min(train[0].len()).max(1);
    let pca = pca_fit(train, Retained::Count(r))?;
    let tr = train.iter().map(|v| pca.project(v)).collect::<Result<Vec<_>>>()?;
    let te = test.iter().map(|v| pca.project(v)).collect::<Result<Vec<_>>>()?;
    Ok((tr, te))
}

fn bow_all(sets: &[Vec<Vec<f64>>], book: &crate::encoding::Codebook) -> Result<Vec<Vec<f64>>> {
    sets.par_iter().map(|s| bow_encode(s, book)).collect()
}

pub fn prepare_trial(cfg: &ExperimentConfig, manifest: &DatasetManifest, table: &FeatureTable, trial: usize) -> Result<PreparedTrial> {
    let seed = trial_seed(cfg.seed, trial);
    let split = stratified_split(manifest, cfg.train_fraction, stream_seed(seed, SEED_SPLIT))?;
    let label = |id: &String| manifest.label_of(id).expect("split ids come from the manifest");
    let train_labels: Vec<usize> = split.train_ids.iter().map(label).collect();
    let test_labels: Vec<usize> = split.test_ids.iter().map(label).collect();
    let (tr_ids, te_ids) = (&split.train_ids, &split.test_ids);
    let audit = Audit::default();
    let mut vectors = Vec::new();
    let mut histograms = Vec::new();

    for &ch in &cfg.channels {
        let name = ch.name();
        match ch {
            FeatureChannel::Goff | FeatureChannel::Vif => {
                let g = group(channel(table, ch)?);
                let train = single_rows(&g, tr_ids, ch)?;
                let test = single_rows(&g, te_ids, ch)?;
                let (a, b) = standardize(&audit, name, tr_ids, train, test)?;
                vectors.push((ch, a, b));
            }
            FeatureChannel::LogC | FeatureChannel::Cuboid => {
                let g = group(channel(table, ch)?);
                let (mut train_sets, mut test_sets) = (sets(&g, tr_ids), sets(&g, te_ids));
                let (k_req, tag) = match ch {
                    FeatureChannel::LogC => (cfg.logc_codebook, SEED_LOGC),
                    _ => (cfg.cuboid_codebook, SEED_CUBOID),
                };
                if ch == FeatureChannel::Cuboid {
                    // descriptor PCA ahead of codebook learning
                    audit.record("fit:pca-descriptor:Cuboid", tr_ids);
                    let pool = pooled(&g, tr_ids);
                    if pool.len() < 2 {
                        return Err(Error::invalid("fewer than 2 cuboid descriptors in the training split"));
                    }
                    let r = cfg.cuboid_pca_dim.min(pool.len() - 1).min(pool[0].len());
                    let pca = pca_fit(&pool, Retained::Count(r))?;
                    let project = |s: &Vec<Vec<f64>>| s.iter().map(|v| pca.project(v)).collect::<Result<Vec<_>>>();
                    train_sets = train_sets.iter().map(project).collect::<Result<_>>()?;
                    test_sets = test_sets.iter().map(project).collect::<Result<_>>()?;
                }
                audit.record(&format!("fit:codebook:{name}"), tr_ids);
                let pool: Vec<Vec<f64>> = train_sets.iter().flatten().cloned().collect();
                if pool.is_empty() {
                    return Err(Error::invalid(format!("no {name} descriptors in the training split")));
                }
                let k = codebook_size(k_req, pool.len());
                let book = kmeans_fit(&pool, k, stream_seed(seed, tag), KMEANS_MAX_ITER)?;
                let (htr, hte) = (bow_all(&train_sets, &book)?, bow_all(&test_sets, &book)?);
                let (ptr, pte) = reduce(&audit, name, tr_ids, &htr, &hte, cfg.pca_dim)?;
                let (a, b) = standardize(&audit, name, tr_ids, ptr, pte)?;
                vectors.push((ch, a, b));
                histograms.push((ch, htr, hte));
            }
            FeatureChannel::Audio => {
                let Some(raw) = table.channel(ch.cache_name()) else {
                    // manifests without audio simply lack the modality
                    continue;
                };
                let g = group(raw);
                audit.record("fit:ubm", tr_ids);
                let pool = pooled(&g, tr_ids);
                let m = cfg.ubm_mixtures.min(pool.len() / 10).max(1);
                let ubm = train_ubm(&pool, m, stream_seed(seed, SEED_UBM))?.gmm;
                let adapt = |id: &String| -> Result<Vec<f64>> {
                    match g.get(id.as_str()) {
                        Some(f) if !f.is_empty() => Ok(supervector(&map_adapt(&ubm, f, RELEVANCE)?)),
                        _ => Ok(supervector(&ubm)),
                    }
                };
                let train = tr_ids.par_iter().map(adapt).collect::<Result<Vec<_>>>()?;
                let test = te_ids.par_iter().map(adapt).collect::<Result<Vec<_>>>()?;
                let (a, b) = standardize(&audit, name, tr_ids, train, test)?;
                vectors.push((ch, a, b));
            }
        }
    }
    Ok(PreparedTrial { trial, seed, split, train_labels, test_labels, vectors, histograms, audit })
}

/// A normalized training Gram with the matching test × train block.
#[derive(Debug, Clone)]
pub struct BankKernel {
    pub entry: BankEntry,
    pub train: DMatrix<f64>,
    pub test: DMatrix<f64>,
}

fn build_kernel(prep: &PreparedTrial, entry: BankEntry, train: &[Vec<f64>], test: &[Vec<f64>]) -> Result<BankKernel> {
    prep.audit.record(&format!("fit:gram:{}", entry.name), &prep.split.train_ids);
    let g = normalize(&gram(&entry.spec, train)?)?;
    prep.audit.record(&format!("apply:gram:{}", entry.name), &prep.split.test_ids);
    let cross = cross_gram(&g, train, test)?;
    Ok(BankKernel { entry, train: g.k, test: cross })
}

fn concat(parts: &[&Vec<Vec<f64>>]) -> Vec<Vec<f64>> {
    let n = parts.first().map_or(0, |p| p.len());
    (0..n).map(|i| parts.iter().flat_map(|p| p[i].iter().copied()).collect()).collect()
}

fn dc_int_entry(hists: &[&ChannelSplit]) -> BankEntry {
    let channels: Vec<String> = hists.iter().map(|h| h.0.name().to_string()).collect();
    BankEntry {
        name: format!("dc_int:{}", channels.join("+")),
        spec: KernelSpec::DcInt { channels: channels.clone(), widths: hists.iter().map(|h| h.1[0].len()).collect() },
        channels,
    }
}

fn dc_int_kernel(prep: &PreparedTrial, hists: &[&ChannelSplit]) -> Result<BankKernel> {
    let train = concat(&hists.iter().map(|h| &h.1).collect::<Vec<_>>());
    let test = concat(&hists.iter().map(|h| &h.2).collect::<Vec<_>>());
    build_kernel(prep, dc_int_entry(hists), &train, &test)
}

/// Polynomial kernel on the concatenation of all standardized vectors.
pub fn poly_kernel(prep: &PreparedTrial) -> Result<BankKernel> {
    let train = concat(&prep.vectors.iter().map(|v| &v.1).collect::<Vec<_>>());
    let test = concat(&prep.vectors.iter().map(|v| &v.2).collect::<Vec<_>>());
    let channels: Vec<String> = prep.vectors.iter().map(|v| v.0.name().to_string()).collect();
    let entry = BankEntry { name: format!("polynomial:{}", channels.join("+")), spec: KernelSpec::polynomial(), channels };
    build_kernel(prep, entry, &train, &test)
}

/// DC-Int over all histogram channels together.
pub fn hist_kernel(prep: &PreparedTrial) -> Result<BankKernel> {
    if prep.histograms.is_empty() {
        return Err(Error::config("svm_hist needs a histogram channel (LogC or Cuboid)"));
    }
    dc_int_kernel(prep, &prep.histograms.iter().collect::<Vec<_>>())
}

/// Vector kernels per channel plus DC-Int per histogram channel (and over
/// all histogram channels together when there are several).
pub fn kernel_bank(cfg: &ExperimentConfig, prep: &PreparedTrial) -> Result<KernelBank> {
    let mut entries: Vec<(BankEntry, &Vec<Vec<f64>>, &Vec<Vec<f64>>)> = Vec::new();
    for (ch, train, test) in &prep.vectors {
        for kind in &cfg.kernels {
            let spec = match kind {
                KernelKind::Linear => KernelSpec::Linear,
                KernelKind::Polynomial => KernelSpec::polynomial(),
                KernelKind::Rbf => {
                    prep.audit.record(&format!("fit:rbf-gamma:{ch}"), &prep.split.train_ids);
                    KernelSpec::Rbf { gamma: median_heuristic_gamma(train) }
                }
                KernelKind::DcInt => continue,
            };
            let entry = BankEntry { name: format!("{}:{}", kind.name(), ch.name()), spec, channels: vec![ch.name().to_string()] };
            entries.push((entry, train, test));
        }
    }
    let built: Vec<(String, Result<BankKernel>)> = entries
        .into_par_iter()
        .map(|(e, tr, te)| (e.name.clone(), build_kernel(prep, e, tr, te)))
        .collect();
    let mut bank = Vec::new();
    let mut skipped = Vec::new();
    for (name, k) in built {
        match k {
            Ok(k) => bank.push(k),
            // e.g. a linear kernel over a channel where some training vector is all zero
            Err(Error::InvalidInput(_)) => skipped.push(name),
            Err(e) => return Err(e),
        }
    }
    if cfg.kernels.contains(&KernelKind::DcInt) {
        for h in &prep.histograms {
            bank.push(dc_int_kernel(prep, &[h])?);
        }
        if prep.histograms.len() > 1 {
            bank.push(dc_int_kernel(prep, &prep.histograms.iter().collect::<Vec<_>>())?);
        }
    }
    if bank.is_empty() {
        return Err(Error::config("kernel bank is empty for the enabled channels"));
    }
    Ok(KernelBank { kernels: bank, skipped })
}

/// Bank kernels plus the entries dropped because their training Gram could
/// not be normalized (a zero self-similarity).
#[derive(Debug, Clone)]
pub struct KernelBank {
    pub kernels: Vec<BankKernel>,
    pub skipped: Vec<String>,
}

fn choose_c(cfg: &ExperimentConfig, prep: &PreparedTrial, k: &DMatrix<f64>, classes: usize) -> Result<f64> {
    prep.audit.record("fit:cv", &prep.split.train_ids);
    Ok(svm::select_c(k, &prep.train_labels, classes, &cfg.c_grid, cfg.cv_folds, stream_seed(prep.seed, SEED_CV))?.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub kernels: std::collections::BTreeMap<String, usize>,
    pub channels: std::collections::BTreeMap<String, usize>,
}

impl From<SelectionHistogram> for Selection {
    fn from(h: SelectionHistogram) -> Self {
        Selection { kernels: h.kernels, channels: h.channels }
    }
}

impl From<&Selection> for SelectionHistogram {
    fn from(s: &Selection) -> Self {
        SelectionHistogram { kernels: s.kernels.clone(), channels: s.channels.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub metrics: Option<MetricsReport>,
    pub confusion: Option<ConfusionMatrix>,
    pub selection: Option<Selection>,
    pub c: Option<f64>,
    /// Bank kernels left out of this trial.
    pub skipped_kernels: Vec<String>,
    /// Fit-phase accesses logged, and how many of them touched test segments.
    pub fit_accesses: usize,
    pub leaks: usize,
    pub error: Option<String>,
}

struct Outcome {
    predictions: Vec<usize>,
    selection: Option<SelectionHistogram>,
    c: f64,
    skipped: Vec<String>,
}

fn run_classifier(cfg: &ExperimentConfig, prep: &PreparedTrial, clf: Classifier, classes: usize) -> Result<Outcome> {
    let svm_params = |c: f64| SvmParams { c, ..SvmParams::default() };
    let single = |k: BankKernel| -> Result<Outcome> {
        let c = choose_c(cfg, prep, &k.train, classes)?;
        prep.audit.record("fit:classifier", &prep.split.train_ids);
        let model = svm::train_one_vs_rest(&k.train, &prep.train_labels, classes, c, svm::DEFAULT_TOL)?;
        prep.audit.record("apply:predict", &prep.split.test_ids);
        Ok(Outcome { predictions: svm::predict_multiclass(&model, &k.test)?, selection: None, c, skipped: Vec::new() })
    };
    match clf {
        Classifier::SvmPoly => single(poly_kernel(prep)?),
        Classifier::SvmHist => single(hist_kernel(prep)?),
        Classifier::SimpleMkl | Classifier::MkBoost => {
            let KernelBank { kernels: bank, skipped } = kernel_bank(cfg, prep)?;
            let entries: Vec<BankEntry> = bank.iter().map(|k| k.entry.clone()).collect();
            let train: Vec<&DMatrix<f64>> = bank.iter().map(|k| &k.train).collect();
            let test: Vec<&DMatrix<f64>> = bank.iter().map(|k| &k.test).collect();
            // C is chosen on the uniformly weighted bank, the MKL starting point
            let uniform = mkl::combine(&train, &vec![1.0 / bank.len() as f64; bank.len()]);
            let c = choose_c(cfg, prep, &uniform, classes)?;
            prep.audit.record("fit:classifier", &prep.split.train_ids);
            let mut hist = SelectionHistogram::new(&entries);
            let predictions = if clf == Classifier::SimpleMkl {
                let specs: Vec<KernelSpec> = entries.iter().map(|e| e.spec.clone()).collect();
                let params = MklParams { svm: svm_params(c), ..MklParams::default() };
                let model = mkl::train_one_vs_rest(&train, &prep.train_labels, classes, &specs, params)?;
                for m in &model.per_class {
                    for (i, sel) in m.selected().into_iter().enumerate() {
                        if sel {
                            hist.record(&entries, i);
                        }
                    }
                }
                prep.audit.record("apply:predict", &prep.split.test_ids);
                mkl::mkl_predict(&model, &test)?
            } else {
                let params = BoostParams {
                    rounds: cfg.boost_rounds,
                    sample_fraction: cfg.boost_fraction,
                    svm: svm_params(c),
                    seed: stream_seed(prep.seed, SEED_BOOST),
                };
                let model = mkboost::train_one_vs_rest(&train, &prep.train_labels, classes, params)?;
                hist.merge(&mkboost::selection_histogram(model.ensembles(), &entries));
                prep.audit.record("apply:predict", &prep.split.test_ids);
                mkboost::boost_predict_multiclass(&model, &test)?
            };
            Ok(Outcome { predictions, selection: Some(hist), c, skipped })
        }
    }
}

fn failed(trial: usize, seed: u64, e: &Error) -> TrialResult {
    TrialResult {
        trial,
        seed,
        metrics: None,
        confusion: None,
        selection: None,
        c: None,
        skipped_kernels: Vec::new(),
        fit_accesses: 0,
        leaks: 0,
        error: Some(e.to_string()),
    }
}

fn evaluate_trial(cfg: &ExperimentConfig, prep: &PreparedTrial, clf: Classifier, classes: usize) -> TrialResult {
    let result = run_classifier(cfg, prep, clf, classes).and_then(|o| {
        let cm = confusion(&prep.test_labels, &o.predictions, classes)?;
        Ok((evaluate(&cm)?, cm, o))
    });
    match result {
        Ok((metrics, cm, o)) => TrialResult {
            trial: prep.trial,
            seed: prep.seed,
            metrics: Some(metrics),
            confusion: Some(cm),
            selection: o.selection.map(Selection::from),
            c: Some(o.c),
            skipped_kernels: o.skipped,
            fit_accesses: prep.audit.fit_accesses(),
            leaks: prep.audit.leaks(&prep.split).len(),
            error: None,
        },
        Err(e) => failed(prep.trial, prep.seed, &e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierRun {
    pub classifier: Classifier,
    pub class_names: Vec<String>,
    pub channels: Vec<FeatureChannel>,
    pub trials: Vec<TrialResult>,
    /// Unweighted mean over successful trials.
    pub aggregate: Option<MetricsReport>,
}

impl ClassifierRun {
    pub fn failed(&self) -> usize {
        self.trials.iter().filter(|t| t.error.is_some()).count()
    }

    pub fn leaks(&self) -> usize {
        self.trials.iter().map(|t| t.leaks).sum()
    }

    /// Errors with [`Error::TooManyFailures`] above the tolerated fraction.
    pub fn check_failures(&self) -> Result<()> {
        let (failed, total) = (self.failed(), self.trials.len());
        if failed as f64 > MAX_FAILED_FRACTION * total as f64 {
            return Err(Error::TooManyFailures { failed, total });
        }
        Ok(())
    }
}

/// Runs `cfg.trials` trials, each shared by all requested classifiers.
pub fn run_trials(cfg: &ExperimentConfig, manifest: &DatasetManifest, table: &FeatureTable, classifiers: &[Classifier]) -> Result<Vec<ClassifierRun>> {
    cfg.validate()?;
    let classes = manifest.num_classes();
    let per_trial: Vec<Vec<TrialResult>> = worker_pool()?.install(|| {
        (0..cfg.trials)
            .into_par_iter()
            .map(|t| match prepare_trial(cfg, manifest, table, t) {
                Ok(prep) => classifiers.iter().map(|&c| evaluate_trial(cfg, &prep, c, classes)).collect(),
                Err(e) => classifiers.iter().map(|_| failed(t, trial_seed(cfg.seed, t), &e)).collect(),
            })
            .collect()
    });
    Ok(classifiers
        .iter()
        .enumerate()
        .map(|(i, &clf)| {
            let trials: Vec<TrialResult> = per_trial.iter().map(|r| r[i].clone()).collect();
            let ok: Vec<MetricsReport> = trials.iter().filter_map(|t| t.metrics.clone()).collect();
            ClassifierRun {
                classifier: clf,
                class_names: manifest.class_names.clone(),
                channels: cfg.channels.clone(),
                aggregate: MetricsReport::mean(&ok),
                trials,
            }
        })
        .collect())
}
