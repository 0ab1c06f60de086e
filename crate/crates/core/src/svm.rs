//! Soft-margin SVM dual solver on precomputed Gram matrices.
//!
//! Sequential minimal optimization with maximal-violating-pair selection,
//! working on `min ½αᵀQα − eᵀα` with `Q = yyᵀ∘K`, `0 ≤ α ≤ C`, `yᵀα = 0`.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::FeatureTable;
use crate::error::{Error, Result};

pub const DEFAULT_C: f64 = 10.0;
pub const DEFAULT_TOL: f64 = 1e-3;
pub const C_GRID: [f64; 4] = [0.1, 1.0, 10.0, 100.0];
pub const CV_FOLDS: usize = 3;
/// Threshold on α for membership in the support set.
pub const SUPPORT_EPS: f64 = 1e-8;
/// Curvature substituted when a pair's second derivative is not positive.
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub labels: Vec<f64>,
    pub c: f64,
    pub objective: f64,
    /// Final maximal KKT violation `m(α) − M(α)`.
    pub kkt_gap: f64,
    pub iterations: usize,
}

impl DualSolution {
    pub fn n(&self) -> usize {
        self.alpha.len()
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.alpha[i] > SUPPORT_EPS).collect()
    }

    /// `αᵢyᵢ` per training sample.
    pub fn signed_alpha(&self) -> Vec<f64> {
        self.alpha.iter().zip(&self.labels).map(|(a, y)| a * y).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    pub tol: f64,
    pub max_iter: Option<usize>,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams { c: DEFAULT_C, tol: DEFAULT_TOL, max_iter: None }
    }
}

pub fn solve_binary(k: &DMatrix<f64>, y: &[f64], c: f64, tol: f64) -> Result<DualSolution> {
    solve_binary_with(k, y, SvmParams { c, tol, max_iter: None }, None, None)
}

/// Full-control entry point: optional warm start and optional per-iteration
/// dual objective trace.
pub fn solve_binary_with(
    k: &DMatrix<f64>,
    y: &[f64],
    params: SvmParams,
    warm: Option<&[f64]>,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<DualSolution> {
    let n = y.len();
    if k.nrows() != n || k.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: k.nrows() });
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::invalid("labels must be +1 or -1"));
    }
    if !y.contains(&1.0) || !y.contains(&-1.0) {
        return Err(Error::Solver("both label values must be present".into()));
    }
    if k.iter().any(|v| !v.is_finite()) {
        return Err(Error::Solver("non-finite Gram entry".into()));
    }
    let c = params.c;
    if !(c > 0.0) || !(params.tol > 0.0) {
        return Err(Error::invalid("C and tolerance must be positive"));
    }

    let q = |i: usize, j: usize| y[i] * y[j] * k[(i, j)];
    let mut alpha = match warm {
        Some(a) if feasible(a, y, c) => a.to_vec(),
        _ => vec![0.0; n],
    };
    // G = Qα − e
    let mut grad = vec![-1.0; n];
    for j in 0..n {
        if alpha[j] != 0.0 {
            for (i, g) in grad.iter_mut().enumerate() {
                *g += q(i, j) * alpha[j];
            }
        }
    }

    let max_iter = params.max_iter.unwrap_or((100 * n).max(1_000_000));
    let mut iterations = 0;
    let mut gap;
    loop {
        let (i, j, g) = select_pair(&alpha, &grad, y, c);
        gap = g;
        if let Some(t) = trace.as_deref_mut() {
            t.push(dual_objective(&alpha, &grad));
        }
        if gap < params.tol || i == usize::MAX || j == usize::MAX {
            break;
        }
        if iterations >= max_iter {
            return Err(Error::Solver(format!("SMO did not converge in {max_iter} iterations (gap {gap:.3e})")));
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        update_pair(&mut alpha, &grad, y, k, i, j, c);
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        if di == 0.0 && dj == 0.0 {
            break;
        }
        for (t, g) in grad.iter_mut().enumerate() {
            *g += q(t, i) * di + q(t, j) * dj;
        }
    }

    let bias = compute_bias(&alpha, &grad, y, c);
    Ok(DualSolution {
        objective: dual_objective(&alpha, &grad),
        alpha,
        bias,
        labels: y.to_vec(),
        c,
        kkt_gap: gap.max(0.0),
        iterations,
    })
}

fn feasible(a: &[f64], y: &[f64], c: f64) -> bool {
    a.len() == y.len()
        && a.iter().all(|&v| (0.0..=c).contains(&v))
        && a.iter().zip(y).map(|(a, y)| a * y).sum::<f64>().abs() <= 1e-8
}

/// `Σα − ½αᵀQα`, evaluated from the gradient as `−½ Σ αᵢ(Gᵢ − 1)`.
fn dual_objective(alpha: &[f64], grad: &[f64]) -> f64 {
    -0.5 * alpha.iter().zip(grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>()
}

fn in_up(a: f64, y: f64, c: f64) -> bool {
    (y > 0.0 && a < c) || (y < 0.0 && a > 0.0)
}

fn in_low(a: f64, y: f64, c: f64) -> bool {
    (y > 0.0 && a > 0.0) || (y < 0.0 && a < c)
}

/// Returns `(i, j, m − M)`; ties pick the lowest index so results are
/// deterministic.
fn select_pair(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> (usize, usize, f64) {
    let (mut i, mut gmax) = (usize::MAX, f64::NEG_INFINITY);
    let (mut j, mut gmax2) = (usize::MAX, f64::NEG_INFINITY);
    for t in 0..alpha.len() {
        if in_up(alpha[t], y[t], c) && -y[t] * grad[t] > gmax {
            gmax = -y[t] * grad[t];
            i = t;
        }
        if in_low(alpha[t], y[t], c) && y[t] * grad[t] > gmax2 {
            gmax2 = y[t] * grad[t];
            j = t;
        }
    }
    (i, j, gmax + gmax2)
}

fn update_pair(alpha: &mut [f64], grad: &[f64], y: &[f64], k: &DMatrix<f64>, i: usize, j: usize, c: f64) {
    let mut quad = k[(i, i)] + k[(j, j)] - 2.0 * k[(i, j)];
    if quad <= 0.0 {
        quad = TAU;
    }
    if y[i] != y[j] {
        let delta = (-grad[i] - grad[j]) / quad;
        let diff = alpha[i] - alpha[j];
        alpha[i] += delta;
        alpha[j] += delta;
        if diff > 0.0 {
            if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = diff;
            }
        } else if alpha[i] < 0.0 {
            alpha[i] = 0.0;
            alpha[j] = -diff;
        }
        if diff > 0.0 {
            if alpha[i] > c {
                alpha[i] = c;
                alpha[j] = c - diff;
            }
        } else if alpha[j] > c {
            alpha[j] = c;
            alpha[i] = c + diff;
        }
    } else {
        let delta = (grad[i] - grad[j]) / quad;
        let sum = alpha[i] + alpha[j];
        alpha[i] -= delta;
        alpha[j] += delta;
        if sum > c {
            if alpha[i] > c {
                alpha[i] = c;
                alpha[j] = sum - c;
            }
        } else if alpha[j] < 0.0 {
            alpha[j] = 0.0;
            alpha[i] = sum;
        }
        if sum > c {
            if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = sum - c;
            }
        } else if alpha[i] < 0.0 {
            alpha[i] = 0.0;
            alpha[j] = sum;
        }
    }
}

/// Average of `yᵢ − g(xᵢ)` over free support vectors; midpoint of the
/// feasible interval when none are free.
fn compute_bias(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let (mut sum, mut count) = (0.0, 0usize);
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] > SUPPORT_EPS && alpha[t] < c - SUPPORT_EPS {
            sum += yg;
            count += 1;
        } else if (alpha[t] <= SUPPORT_EPS && y[t] < 0.0) || (alpha[t] >= c - SUPPORT_EPS && y[t] > 0.0) {
            ub = ub.min(yg);
        } else {
            lb = lb.max(yg);
        }
    }
    let rho = if count > 0 {
        sum / count as f64
    } else {
        match (ub.is_finite(), lb.is_finite()) {
            (true, true) => 0.5 * (ub + lb),
            (true, false) => ub,
            (false, true) => lb,
            (false, false) => 0.0,
        }
    };
    -rho
}

pub fn decision_value(sol: &DualSolution, k_row: &[f64]) -> Result<f64> {
    if k_row.len() != sol.n() {
        return Err(Error::DimensionMismatch { expected: sol.n(), got: k_row.len() });
    }
    Ok(sol.alpha.iter().zip(&sol.labels).zip(k_row).map(|((a, y), k)| a * y * k).sum::<f64>() + sol.bias)
}

/// Decision values for every row of a query × train kernel block.
pub fn decision_values(sol: &DualSolution, rows: &DMatrix<f64>) -> Result<Vec<f64>> {
    if rows.ncols() != sol.n() {
        return Err(Error::DimensionMismatch { expected: sol.n(), got: rows.ncols() });
    }
    let w = nalgebra::DVector::from_vec(sol.signed_alpha());
    Ok((rows * w).iter().map(|v| v + sol.bias).collect())
}

/// Index of the largest value, ties to the lowest index.
pub fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// `+1` for members of `class`, `−1` otherwise.
pub fn one_vs_rest_labels(labels: &[usize], class: usize) -> Vec<f64> {
    labels.iter().map(|&l| if l == class { 1.0 } else { -1.0 }).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MulticlassModel {
    pub per_class: Vec<DualSolution>,
}

impl MulticlassModel {
    pub fn num_classes(&self) -> usize {
        self.per_class.len()
    }
}

pub fn train_one_vs_rest(k: &DMatrix<f64>, labels: &[usize], classes: usize, c: f64, tol: f64) -> Result<MulticlassModel> {
    if classes < 2 {
        return Err(Error::invalid("need at least two classes"));
    }
    let per_class = (0..classes)
        .into_par_iter()
        .map(|cl| solve_binary(k, &one_vs_rest_labels(labels, cl), c, tol))
        .collect::<Result<Vec<_>>>()?;
    Ok(MulticlassModel { per_class })
}

/// Per-class decision values for each query row; `rows` is query × train.
pub fn multiclass_scores(model: &MulticlassModel, rows: &DMatrix<f64>) -> Result<Vec<Vec<f64>>> {
    let per_class = model.per_class.iter().map(|s| decision_values(s, rows)).collect::<Result<Vec<_>>>()?;
    Ok((0..rows.nrows()).map(|q| per_class.iter().map(|v| v[q]).collect()).collect())
}

pub fn predict_multiclass(model: &MulticlassModel, rows: &DMatrix<f64>) -> Result<Vec<usize>> {
    Ok(multiclass_scores(model, rows)?.iter().map(|s| argmax_lowest(s)).collect())
}

/// Stratified fold assignment: members of each class are shuffled and dealt
/// round-robin.
pub fn stratified_folds(labels: &[usize], folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assign = vec![0; labels.len()];
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut offset = 0;
    for cl in 0..classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == cl).collect();
        members.shuffle(&mut rng);
        for (r, &i) in members.iter().enumerate() {
            assign[i] = (r + offset) % folds;
        }
        offset += members.len();
    }
    assign
}

/// Cross-validated accuracy for each candidate C; returns the best C (ties
/// to the smaller value) and the per-candidate accuracies.
pub fn select_c(k: &DMatrix<f64>, labels: &[usize], classes: usize, grid: &[f64], folds: usize, seed: u64) -> Result<(f64, Vec<f64>)> {
    if grid.is_empty() || folds < 2 {
        return Err(Error::invalid("C grid must be non-empty and folds >= 2"));
    }
    let assign = stratified_folds(labels, folds, seed);
    let scores: Vec<f64> = grid
        .par_iter()
        .map(|&c| {
            let mut correct = 0usize;
            for f in 0..folds {
                let train: Vec<usize> = (0..labels.len()).filter(|&i| assign[i] != f).collect();
                let test: Vec<usize> = (0..labels.len()).filter(|&i| assign[i] == f).collect();
                let ktr = DMatrix::from_fn(train.len(), train.len(), |a, b| k[(train[a], train[b])]);
                let ytr: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
                let Ok(model) = train_one_vs_rest(&ktr, &ytr, classes, c, DEFAULT_TOL) else { continue };
                let kte = DMatrix::from_fn(test.len(), train.len(), |a, b| k[(test[a], train[b])]);
                if let Ok(pred) = predict_multiclass(&model, &kte) {
                    correct += pred.iter().zip(&test).filter(|(p, &i)| **p == labels[i]).count();
                }
            }
            correct as f64 / labels.len() as f64
        })
        .collect();
    let mut best = 0;
    for i in 1..grid.len() {
        if scores[i] > scores[best] || (scores[i] == scores[best] && grid[i] < grid[best]) {
            best = i;
        }
    }
    Ok((grid[best], scores))
}

/// Stores a solution as `{prefix}:alpha`, `{prefix}:labels` and
/// `{prefix}:scalars` (bias, C, objective, KKT gap, iterations).
pub fn write_dual(table: &mut FeatureTable, prefix: &str, sol: &DualSolution) -> Result<()> {
    table.insert(&format!("{prefix}:alpha"), "alpha", sol.alpha.clone())?;
    table.insert(&format!("{prefix}:labels"), "labels", sol.labels.clone())?;
    table.insert(
        &format!("{prefix}:scalars"),
        "scalars",
        vec![sol.bias, sol.c, sol.objective, sol.kkt_gap, sol.iterations as f64],
    )
}

pub fn read_dual(table: &FeatureTable, prefix: &str) -> Result<DualSolution> {
    let get = |part: &str| -> Result<Vec<f64>> {
        table
            .channel(&format!("{prefix}:{part}"))
            .and_then(|c| c.rows.first())
            .map(|(_, v)| v.clone())
            .ok_or_else(|| Error::CorruptCache(format!("missing {prefix}:{part}")))
    };
    let (alpha, labels, s) = (get("alpha")?, get("labels")?, get("scalars")?);
    if alpha.len() != labels.len() || s.len() != 5 {
        return Err(Error::CorruptCache(format!("inconsistent solution {prefix}")));
    }
    Ok(DualSolution { alpha, labels, bias: s[0], c: s[1], objective: s[2], kkt_gap: s[3], iterations: s[4] as usize })
}
