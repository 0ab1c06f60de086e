//! MKBoost: boosting over single-kernel SVM weak learners, with the
//! selection-frequency bookkeeping used to compare feature channels.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::FeatureTable;
use crate::error::{Error, Result};
use crate::kernels::BankEntry;
use crate::svm::{self, argmax_lowest, one_vs_rest_labels, DualSolution, SvmParams};

pub const DEFAULT_ROUNDS: usize = 20;
pub const DEFAULT_SAMPLE_FRACTION: f64 = 0.5;
pub const MAX_RETRIES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoostParams {
    pub rounds: usize,
    pub sample_fraction: f64,
    pub svm: SvmParams,
    pub seed: u64,
}

impl Default for BoostParams {
    fn default() -> Self {
        BoostParams { rounds: DEFAULT_ROUNDS, sample_fraction: DEFAULT_SAMPLE_FRACTION, svm: SvmParams::default(), seed: 0 }
    }
}

/// A weak learner trained on `sample` (indices into the training set, with
/// repeats) using kernel `kernel`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostRound {
    pub kernel: usize,
    pub sample: Vec<usize>,
    pub solution: DualSolution,
    pub weight: f64,
    pub error: f64,
    /// Distribution over training examples this round was drawn from.
    #[serde(default)]
    pub distribution: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostEnsemble {
    pub rounds: Vec<BoostRound>,
    /// Distribution over training examples after the last round.
    pub distribution: Vec<f64>,
}

/// `w = ½ ln((1 − ε)/ε)`.
pub fn round_weight(eps: f64) -> f64 {
    0.5 * ((1.0 - eps) / eps).ln()
}

fn sign(v: f64) -> f64 {
    if v >= 0.0 { 1.0 } else { -1.0 }
}

/// Weak-learner outputs on all `rows` (query × full training set).
fn weak_predict(round: &BoostRound, rows: &DMatrix<f64>) -> Result<Vec<f64>> {
    let sub = DMatrix::from_fn(rows.nrows(), round.sample.len(), |i, j| rows[(i, round.sample[j])]);
    Ok(svm::decision_values(&round.solution, &sub)?.into_iter().map(sign).collect())
}

fn train_weak(gram: &DMatrix<f64>, y: &[f64], sample: &[usize], kernel: usize, svm: SvmParams) -> Option<BoostRound> {
    let ys: Vec<f64> = sample.iter().map(|&i| y[i]).collect();
    let k = DMatrix::from_fn(sample.len(), sample.len(), |a, b| gram[(sample[a], sample[b])]);
    let solution = svm::solve_binary_with(&k, &ys, svm, None, None).ok()?;
    Some(BoostRound { kernel, sample: sample.to_vec(), solution, weight: 0.0, error: 0.0, distribution: Vec::new() })
}

/// Draws a sample and returns the minimum-error weak learner with its
/// predictions on the training set, retrying degenerate draws.
fn best_of_round(
    grams: &[&DMatrix<f64>],
    y: &[f64],
    dist: &[f64],
    draw: usize,
    params: &BoostParams,
    rng: &mut ChaCha8Rng,
) -> Result<(BoostRound, Vec<f64>)> {
    let sampler = WeightedIndex::new(dist).map_err(|e| Error::Solver(format!("bad boosting distribution: {e}")))?;
    for _ in 0..=MAX_RETRIES {
        let sample: Vec<usize> = (0..draw).map(|_| sampler.sample(rng)).collect();
        let candidates: Vec<(BoostRound, Vec<f64>)> = (0..grams.len())
            .into_par_iter()
            .filter_map(|m| {
                let mut r = train_weak(grams[m], y, &sample, m, params.svm)?;
                let pred = weak_predict(&r, grams[m]).ok()?;
                r.error = pred.iter().zip(y).zip(dist).filter(|((p, y), _)| p != y).map(|(_, s)| s).sum();
                Some((r, pred))
            })
            .collect();
        // ties go to the lowest kernel index
        if let Some(best) = candidates.into_iter().reduce(|a, b| if b.0.error < a.0.error { b } else { a }) {
            return Ok(best);
        }
    }
    Err(Error::Solver(format!("no weak learner could be trained after {MAX_RETRIES} retries")))
}

pub fn mkboost_train(grams: &[&DMatrix<f64>], y: &[f64], params: BoostParams) -> Result<BoostEnsemble> {
    let Some(first) = grams.first() else {
        return Err(Error::invalid("MKBoost needs at least one kernel"));
    };
    let n = y.len();
    if grams.iter().any(|g| g.nrows() != n || g.ncols() != n) {
        return Err(Error::DimensionMismatch { expected: n, got: first.nrows() });
    }
    if !(params.sample_fraction > 0.0 && params.sample_fraction <= 1.0) || params.rounds == 0 {
        return Err(Error::invalid("MKBoost needs 0 < r <= 1 and T >= 1"));
    }
    let draw = ((params.sample_fraction * n as f64).ceil() as usize).max(2);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut dist = vec![1.0 / n as f64; n];
    let mut rounds = Vec::with_capacity(params.rounds);

    for _ in 0..params.rounds {
        let (mut round, mut pred) = best_of_round(grams, y, &dist, draw, &params, &mut rng)?;
        if round.error >= 0.5 {
            (round, pred) = best_of_round(grams, y, &dist, draw, &params, &mut rng)?;
        }
        round.distribution = dist.clone();
        if round.error >= 0.5 {
            round.weight = 0.0;
        } else {
            round.error = round.error.max(1.0 / (2.0 * n as f64));
            round.weight = round_weight(round.error);
            for ((s, p), yi) in dist.iter_mut().zip(&pred).zip(y) {
                *s *= if p == yi { (-round.weight).exp() } else { round.weight.exp() };
            }
            let z: f64 = dist.iter().sum();
            dist.iter_mut().for_each(|s| *s /= z);
        }
        rounds.push(round);
    }
    Ok(BoostEnsemble { rounds, distribution: dist })
}

/// `Σₜ wₜ fₜ(x)`; `rows[m]` is query × train for kernel m.
pub fn boost_margin(ens: &BoostEnsemble, rows: &[&DMatrix<f64>]) -> Result<Vec<f64>> {
    let Some(q) = rows.first().map(|r| r.nrows()) else {
        return Err(Error::invalid("no kernel rows"));
    };
    if ens.rounds.is_empty() {
        return Err(Error::invalid("empty ensemble"));
    }
    let mut margin = vec![0.0; q];
    for r in &ens.rounds {
        let k = rows.get(r.kernel).ok_or(Error::DimensionMismatch { expected: r.kernel + 1, got: rows.len() })?;
        for (m, p) in margin.iter_mut().zip(weak_predict(r, k)?) {
            *m += r.weight * p;
        }
    }
    Ok(margin)
}

/// Binary predictions; a zero margin maps to `+1`.
pub fn boost_predict(ens: &BoostEnsemble, rows: &[&DMatrix<f64>]) -> Result<Vec<f64>> {
    Ok(boost_margin(ens, rows)?.into_iter().map(sign).collect())
}

/// `Πₜ 2√(εₜ(1 − εₜ))`, with zero-weight rounds contributing 1.
pub fn training_error_bound(ens: &BoostEnsemble) -> f64 {
    ens.rounds
        .iter()
        .map(|r| if r.weight == 0.0 { 1.0 } else { 2.0 * (r.error * (1.0 - r.error)).sqrt() })
        .product()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostMulticlass {
    pub per_class: Vec<BoostEnsemble>,
}

pub fn train_one_vs_rest(grams: &[&DMatrix<f64>], labels: &[usize], classes: usize, params: BoostParams) -> Result<BoostMulticlass> {
    if classes < 2 {
        return Err(Error::invalid("need at least two classes"));
    }
    let per_class = (0..classes)
        .into_par_iter()
        .map(|c| {
            let p = BoostParams { seed: class_seed(params.seed, c), ..params };
            mkboost_train(grams, &one_vs_rest_labels(labels, c), p)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BoostMulticlass { per_class })
}

fn class_seed(seed: u64, class: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(class as u64 + 1);
    rand::RngCore::next_u64(&mut rng)
}

pub fn boost_predict_multiclass(model: &BoostMulticlass, rows: &[&DMatrix<f64>]) -> Result<Vec<usize>> {
    let margins = model.per_class.iter().map(|e| boost_margin(e, rows)).collect::<Result<Vec<_>>>()?;
    let q = rows.first().map_or(0, |r| r.nrows());
    Ok((0..q).map(|i| argmax_lowest(&margins.iter().map(|m| m[i]).collect::<Vec<_>>())).collect())
}

impl BoostMulticlass {
    pub fn ensembles(&self) -> impl Iterator<Item = &BoostEnsemble> {
        self.per_class.iter()
    }

    pub fn write_into(&self, table: &mut FeatureTable, name: &str) -> Result<()> {
        for (c, ens) in self.per_class.iter().enumerate() {
            for (t, r) in ens.rounds.iter().enumerate() {
                let prefix = format!("model:{name}:class{c}:round{t}");
                table.insert(&format!("{prefix}:meta"), "meta", vec![r.kernel as f64, r.weight, r.error])?;
                table.insert(&format!("{prefix}:sample"), "sample", r.sample.iter().map(|&i| i as f64).collect())?;
                svm::write_dual(table, &prefix, &r.solution)?;
            }
            table.insert(&format!("model:{name}:class{c}:distribution"), "S", ens.distribution.clone())?;
        }
        Ok(())
    }

    pub fn read_from(table: &FeatureTable, name: &str) -> Result<Self> {
        let mut per_class = Vec::new();
        loop {
            let c = per_class.len();
            let Some(dist) = table.channel(&format!("model:{name}:class{c}:distribution")) else { break };
            let mut rounds = Vec::new();
            while let Some(meta) = table.channel(&format!("model:{name}:class{c}:round{}:meta", rounds.len())) {
                let prefix = format!("model:{name}:class{c}:round{}", rounds.len());
                let m = &meta.rows[0].1;
                let sample = table
                    .channel(&format!("{prefix}:sample"))
                    .ok_or_else(|| Error::CorruptCache(format!("missing {prefix}:sample")))?
                    .rows[0]
                    .1
                    .iter()
                    .map(|&v| v as usize)
                    .collect();
                rounds.push(BoostRound {
                    kernel: m[0] as usize,
                    weight: m[1],
                    error: m[2],
                    sample,
                    solution: svm::read_dual(table, &prefix)?,
                    distribution: Vec::new(),
                });
            }
            per_class.push(BoostEnsemble { rounds, distribution: dist.rows[0].1.clone() });
        }
        if per_class.is_empty() {
            return Err(Error::CorruptCache(format!("missing boosting model {name}")));
        }
        Ok(BoostMulticlass { per_class })
    }
}

/// Selection counts per bank entry and per feature channel.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SelectionHistogram {
    pub kernels: BTreeMap<String, usize>,
    pub channels: BTreeMap<String, usize>,
}

impl SelectionHistogram {
    pub fn new(bank: &[BankEntry]) -> Self {
        let mut h = SelectionHistogram::default();
        for e in bank {
            h.kernels.entry(e.name.clone()).or_insert(0);
            for c in &e.channels {
                h.channels.entry(c.clone()).or_insert(0);
            }
        }
        h
    }

    /// Records one selection of bank entry `idx`; every channel the entry
    /// uses is marked selected.
    pub fn record(&mut self, bank: &[BankEntry], idx: usize) {
        let e = &bank[idx];
        *self.kernels.entry(e.name.clone()).or_insert(0) += 1;
        for c in &e.channels {
            *self.channels.entry(c.clone()).or_insert(0) += 1;
        }
    }

    pub fn merge(&mut self, other: &SelectionHistogram) {
        for (k, v) in &other.kernels {
            *self.kernels.entry(k.clone()).or_insert(0) += v;
        }
        for (k, v) in &other.channels {
            *self.channels.entry(k.clone()).or_insert(0) += v;
        }
    }

    pub fn kernel_csv(&self) -> String {
        csv("kernel_kind", &self.kernels)
    }

    pub fn channel_csv(&self) -> String {
        csv("channel", &self.channels)
    }
}

fn csv(head: &str, counts: &BTreeMap<String, usize>) -> String {
    let mut s = format!("{head},count\n");
    for (k, v) in counts {
        s.push_str(&format!("{k},{v}\n"));
    }
    s
}

/// Counts every round of every ensemble.
pub fn selection_histogram<'a>(ensembles: impl IntoIterator<Item = &'a BoostEnsemble>, bank: &[BankEntry]) -> SelectionHistogram {
    let mut h = SelectionHistogram::new(bank);
    for e in ensembles {
        for r in &e.rounds {
            h.record(bank, r.kernel);
        }
    }
    h
}
