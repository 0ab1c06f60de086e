//! SimpleMKL: simplex-constrained kernel weights learned by reduced-gradient
//! descent around the SVM dual solver.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::FeatureTable;
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::svm::{self, argmax_lowest, one_vs_rest_labels, DualSolution, SvmParams};

pub const DEFAULT_OUTER_TOL: f64 = 1e-3;
pub const MAX_OUTER: usize = 50;
pub const LINE_SEARCH_EVALS: usize = 20;
/// Weight below which a kernel counts as not selected.
pub const SELECTION_THRESHOLD: f64 = 1e-4;
const D_CHANGE_TOL: f64 = 1e-6;
const SIMPLEX_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MklParams {
    pub svm: SvmParams,
    pub outer_tol: f64,
    pub max_outer: usize,
}

impl Default for MklParams {
    fn default() -> Self {
        MklParams { svm: SvmParams::default(), outer_tol: DEFAULT_OUTER_TOL, max_outer: MAX_OUTER }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MklModel {
    pub weights: Vec<f64>,
    pub inner: DualSolution,
    pub kernels: Vec<KernelSpec>,
    /// J at the start and after every accepted outer step.
    pub objective_trace: Vec<f64>,
    /// Kernel weights matching each `objective_trace` entry.
    #[serde(default)]
    pub weight_trace: Vec<Vec<f64>>,
    pub outer_iterations: usize,
}

impl MklModel {
    pub fn selected(&self) -> Vec<bool> {
        self.weights.iter().map(|&d| d >= SELECTION_THRESHOLD).collect()
    }
}

pub fn combine(grams: &[&DMatrix<f64>], d: &[f64]) -> DMatrix<f64> {
    let mut k = DMatrix::zeros(grams[0].nrows(), grams[0].ncols());
    for (g, &w) in grams.iter().zip(d) {
        if w != 0.0 {
            k += *g * w;
        }
    }
    k
}

/// `∂J/∂d_m = −½ Σᵢⱼ αᵢαⱼyᵢyⱼ K_m[i][j]` for a fixed dual solution.
pub fn gradient(grams: &[&DMatrix<f64>], sol: &DualSolution) -> Vec<f64> {
    let w = nalgebra::DVector::from_vec(sol.signed_alpha());
    grams.iter().map(|g| -0.5 * w.dot(&(*g * &w))).collect()
}

/// `J(d)` for a fixed α, i.e. the dual objective on the combined kernel.
pub fn objective_at(grams: &[&DMatrix<f64>], sol: &DualSolution, d: &[f64]) -> f64 {
    let g = gradient(grams, sol);
    sol.alpha.iter().sum::<f64>() + g.iter().zip(d).map(|(g, d)| g * d).sum::<f64>()
}

/// `max_m(−∂J/∂d_m) − Σ d_m(−∂J/∂d_m)`.
pub fn duality_gap(grad: &[f64], d: &[f64]) -> f64 {
    let max = grad.iter().map(|g| -g).fold(f64::NEG_INFINITY, f64::max);
    max - grad.iter().zip(d).map(|(g, d)| -g * d).sum::<f64>()
}

fn project_simplex(d: &mut [f64]) {
    for v in d.iter_mut() {
        if *v < SIMPLEX_GUARD {
            *v = 0.0;
        }
    }
    let s: f64 = d.iter().sum();
    for v in d.iter_mut() {
        *v /= s;
    }
}

/// Reduced gradient with respect to `μ = argmax d`; components at zero
/// whose gradient pushes outward stay fixed.
fn descent_direction(grad: &[f64], d: &[f64], mu: usize) -> Vec<f64> {
    let mut dir = vec![0.0; d.len()];
    for m in 0..d.len() {
        if m == mu {
            continue;
        }
        let r = grad[m] - grad[mu];
        if d[m] > 0.0 || r < 0.0 {
            dir[m] = -r;
            dir[mu] += r;
        }
    }
    dir
}

struct Solver<'a> {
    grams: &'a [&'a DMatrix<f64>],
    y: &'a [f64],
    params: SvmParams,
}

impl Solver<'_> {
    fn solve(&self, d: &[f64], warm: Option<&[f64]>) -> Result<DualSolution> {
        svm::solve_binary_with(&combine(self.grams, d), self.y, self.params, warm, None)
    }
}

fn step(d: &[f64], dir: &[f64], gamma: f64) -> Vec<f64> {
    let mut out: Vec<f64> = d.iter().zip(dir).map(|(d, v)| d + gamma * v).collect();
    project_simplex(&mut out);
    out
}

fn validate(grams: &[&DMatrix<f64>], y: &[f64]) -> Result<()> {
    let Some(first) = grams.first() else {
        return Err(Error::invalid("SimpleMKL needs at least one kernel"));
    };
    for g in grams {
        if g.nrows() != first.nrows() || g.ncols() != first.ncols() {
            return Err(Error::SizeMismatch((first.nrows(), first.ncols()), (g.nrows(), g.ncols())));
        }
    }
    if first.nrows() != y.len() {
        return Err(Error::DimensionMismatch { expected: first.nrows(), got: y.len() });
    }
    Ok(())
}

pub fn simple_mkl_train(grams: &[&DMatrix<f64>], y: &[f64], kernels: &[KernelSpec], params: MklParams) -> Result<MklModel> {
    validate(grams, y)?;
    if !kernels.is_empty() && kernels.len() != grams.len() {
        return Err(Error::DimensionMismatch { expected: grams.len(), got: kernels.len() });
    }
    let m = grams.len();
    let solver = Solver { grams, y, params: params.svm };
    let mut d = vec![1.0 / m as f64; m];
    let mut sol = solver.solve(&d, None)?;
    let mut trace = vec![sol.objective];
    let mut weight_trace = vec![d.clone()];
    let mut outer = 0;

    while outer < params.max_outer && m > 1 {
        outer += 1;
        let grad = gradient(grams, &sol);
        if duality_gap(&grad, &d) < params.outer_tol {
            break;
        }
        let j_start = sol.objective;
        let mu = argmax_lowest(&d);
        let mut dir = descent_direction(&grad, &d, mu);
        if dir.iter().all(|v| v.abs() < 1e-15) {
            break;
        }

        // Walk to the simplex boundary while that keeps lowering J.
        let (mut cur_d, mut cur_sol) = (d.clone(), sol.clone());
        let (gamma_max, far_d, far_sol) = loop {
            let Some((nu, gmax)) = (0..m)
                .filter(|&k| dir[k] < 0.0)
                .map(|k| (k, -cur_d[k] / dir[k]))
                .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            else {
                break (0.0, cur_d.clone(), cur_sol.clone());
            };
            let mut next_d = step(&cur_d, &dir, gmax);
            next_d[nu] = 0.0;
            project_simplex(&mut next_d);
            let next_sol = solver.solve(&next_d, Some(&cur_sol.alpha))?;
            if next_sol.objective < cur_sol.objective && gmax > 0.0 {
                let mut next_dir = dir.clone();
                next_dir[mu] += dir[nu];
                next_dir[nu] = 0.0;
                cur_d = next_d;
                cur_sol = next_sol;
                dir = next_dir;
                if dir.iter().all(|v| v.abs() < 1e-15) {
                    break (0.0, cur_d.clone(), cur_sol.clone());
                }
            } else {
                break (gmax, next_d, next_sol);
            }
        };

        // Golden-section search on γ ∈ [0, γ_max] along the final direction.
        let (mut best_d, mut best_sol) = (cur_d.clone(), cur_sol.clone());
        if far_sol.objective < best_sol.objective {
            best_d = far_d;
            best_sol = far_sol;
        }
        if gamma_max > 0.0 {
            let phi = (5f64.sqrt() - 1.0) / 2.0;
            let (mut a, mut b) = (0.0, gamma_max);
            let eval = |g: f64, warm: &[f64]| -> Result<(Vec<f64>, DualSolution)> {
                let dd = step(&cur_d, &dir, g);
                let s = solver.solve(&dd, Some(warm))?;
                Ok((dd, s))
            };
            let mut x1 = b - phi * (b - a);
            let mut x2 = a + phi * (b - a);
            let (mut p1, mut s1) = eval(x1, &cur_sol.alpha)?;
            let (mut p2, mut s2) = eval(x2, &s1.alpha)?;
            for _ in 2..LINE_SEARCH_EVALS {
                if s1.objective <= s2.objective {
                    b = x2;
                    x2 = x1;
                    (p2, s2) = (p1.clone(), s1.clone());
                    x1 = b - phi * (b - a);
                    (p1, s1) = eval(x1, &s2.alpha)?;
                } else {
                    a = x1;
                    x1 = x2;
                    (p1, s1) = (p2.clone(), s2.clone());
                    x2 = a + phi * (b - a);
                    (p2, s2) = eval(x2, &s1.alpha)?;
                }
            }
            for (pd, ps) in [(p1, s1), (p2, s2)] {
                if ps.objective < best_sol.objective {
                    best_d = pd;
                    best_sol = ps;
                }
            }
        }

        if best_sol.objective > j_start {
            break;
        }
        let change = best_d.iter().zip(&d).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        d = best_d;
        sol = best_sol;
        trace.push(sol.objective);
        weight_trace.push(d.clone());
        if change < D_CHANGE_TOL {
            break;
        }
    }

    Ok(MklModel { weights: d, inner: sol, kernels: kernels.to_vec(), objective_trace: trace, weight_trace, outer_iterations: outer })
}

/// `f(x) = Σᵢ αᵢyᵢ Σ_m d_m K_m(x, xᵢ) + b`; `rows[m]` is query × train for kernel m.
pub fn mkl_decision(model: &MklModel, rows: &[&DMatrix<f64>]) -> Result<Vec<f64>> {
    if rows.len() != model.weights.len() {
        return Err(Error::DimensionMismatch { expected: model.weights.len(), got: rows.len() });
    }
    svm::decision_values(&model.inner, &combine(rows, &model.weights))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MklMulticlass {
    pub per_class: Vec<MklModel>,
}

pub fn train_one_vs_rest(grams: &[&DMatrix<f64>], labels: &[usize], classes: usize, kernels: &[KernelSpec], params: MklParams) -> Result<MklMulticlass> {
    if classes < 2 {
        return Err(Error::invalid("need at least two classes"));
    }
    let per_class = (0..classes)
        .into_par_iter()
        .map(|c| simple_mkl_train(grams, &one_vs_rest_labels(labels, c), kernels, params))
        .collect::<Result<Vec<_>>>()?;
    Ok(MklMulticlass { per_class })
}

pub fn mkl_predict(model: &MklMulticlass, rows: &[&DMatrix<f64>]) -> Result<Vec<usize>> {
    let scores = model.per_class.iter().map(|m| mkl_decision(m, rows)).collect::<Result<Vec<_>>>()?;
    let n = rows.first().map_or(0, |r| r.nrows());
    Ok((0..n).map(|q| argmax_lowest(&scores.iter().map(|s| s[q]).collect::<Vec<_>>())).collect())
}

impl MklMulticlass {
    /// Kernel descriptors go in the row ids of `model:{name}:kernels`
    /// (JSON), with the per-class weights as row values.
    pub fn write_into(&self, table: &mut FeatureTable, name: &str) -> Result<()> {
        let Some(first) = self.per_class.first() else {
            return Err(Error::invalid("empty MKL model"));
        };
        for (m, spec) in first.kernels.iter().enumerate() {
            let id = serde_json::to_string(spec).map_err(|e| Error::invalid(e.to_string()))?;
            let w = self.per_class.iter().map(|c| c.weights[m]).collect();
            table.insert(&format!("model:{name}:kernels"), &id, w)?;
        }
        for (c, model) in self.per_class.iter().enumerate() {
            table.insert(&format!("model:{name}:class{c}:weights"), "d", model.weights.clone())?;
            svm::write_dual(table, &format!("model:{name}:class{c}"), &model.inner)?;
        }
        Ok(())
    }

    pub fn read_from(table: &FeatureTable, name: &str) -> Result<Self> {
        let kernels = match table.channel(&format!("model:{name}:kernels")) {
            Some(ch) => ch
                .rows
                .iter()
                .map(|(id, _)| serde_json::from_str(id).map_err(|e| Error::CorruptCache(e.to_string())))
                .collect::<Result<Vec<KernelSpec>>>()?,
            None => Vec::new(),
        };
        let mut per_class = Vec::new();
        while let Some(ch) = table.channel(&format!("model:{name}:class{}:weights", per_class.len())) {
            let inner = svm::read_dual(table, &format!("model:{name}:class{}", per_class.len()))?;
            per_class.push(MklModel {
                weights: ch.rows[0].1.clone(),
                inner,
                kernels: kernels.clone(),
                objective_trace: Vec::new(),
                weight_trace: Vec::new(),
                outer_iterations: 0,
            });
        }
        if per_class.is_empty() {
            return Err(Error::CorruptCache(format!("missing MKL model {name}")));
        }
        Ok(MklMulticlass { per_class })
    }
}
