//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL
//! line each, and exits non-zero if any criterion fails.
//!
//! The optional real-corpus check runs only when `EGOFUSE_JPL_MANIFEST`
//! points at a manifest.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

use egofuse::audio::{map_adapt, mfcc, supervector, train_ubm, DiagGmm, MfccConfig};
use egofuse::data::{load_manifest, DatasetManifest, FeatureTable};
use egofuse::harness::{self, Classifier, ExperimentConfig, FeatureChannel};
use egofuse::kernels::{gram, histogram_distance, kernel_eval, median_heuristic_gamma, normalize, KernelSpec};
use egofuse::metrics::{confusion, evaluate, kappa, sic, ConfusionMatrix};
use egofuse::mkboost::{boost_predict, mkboost_train, round_weight, BoostParams};
use egofuse::mkl::{gradient, simple_mkl_train, MklParams};
use egofuse::svm::{solve_binary, solve_binary_with, SvmParams};

use common::*;

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

/// Synthetic corpus extracted once and shared by the dimensional and
/// end-to-end criteria.
struct Corpus {
    _dir: tempfile::TempDir,
    cfg: ExperimentConfig,
    manifest: DatasetManifest,
    table: FeatureTable,
}

fn build_corpus() -> Result<Corpus, String> {
    let dir = tempfile::tempdir().map_err(e2s)?;
    let data = dir.path().join("data");
    let manifest = harness::synth_dataset(1, &data).map_err(e2s)?;
    let cfg = ExperimentConfig::new(data.join(harness::synth::MANIFEST_FILE), dir.path().join("out"));
    let (table, _) = harness::extract(&cfg, &manifest).map_err(e2s)?;
    Ok(Corpus { _dir: dir, cfg, manifest, table })
}

fn criterion_1(corpus: &mut Option<Corpus>) -> Check {
    let c = build_corpus()?;
    let dim = |ch: FeatureChannel| c.table.channel(ch.cache_name()).map(|t| t.dim).unwrap_or(0);
    let (goff, vif, logc) = (dim(FeatureChannel::Goff), dim(FeatureChannel::Vif), dim(FeatureChannel::LogC));
    ensure!(goff == 137, "GOFF has {goff} dims");
    ensure!(vif == 106, "VIF has {vif} dims");
    ensure!(logc == 78, "Log-C window has {logc} dims");
    let frames: Vec<Vec<f64>> = c.table.channel(FeatureChannel::Audio.cache_name()).ok_or("no audio channel")?.rows.iter().map(|r| r.1.clone()).collect();
    let ubm = train_ubm(&frames, 16, 7).map_err(e2s)?;
    let first = &c.manifest.segments[0].id;
    let own: Vec<Vec<f64>> = c.table.channel(FeatureChannel::Audio.cache_name()).unwrap().rows_for(first).map(|r| r.to_vec()).collect();
    let sv = supervector(&map_adapt(&ubm.gmm, &own, egofuse::audio::RELEVANCE).map_err(e2s)?);
    ensure!(sv.len() == 624, "supervector has {} dims", sv.len());
    let detail = format!("GOFF {goff}, VIF {vif}, Log-C {logc}, supervector {} over {} segments", sv.len(), c.manifest.segments.len());
    *corpus = Some(c);
    Ok(detail)
}

fn criterion_2() -> Check {
    let mut r = rng(2);
    let poly = KernelSpec::polynomial();
    for _ in 0..200 {
        let d = r.random_range(1..20);
        let x: Vec<f64> = (0..d).map(|_| r.random_range(-2.0..2.0)).collect();
        let y: Vec<f64> = (0..d).map(|_| r.random_range(-2.0..2.0)).collect();
        let mut dot = 0.0;
        for i in 0..d {
            dot += x[i] * y[i];
        }
        let t = dot + 1.0;
        let direct = t * t * t;
        let got = kernel_eval(&poly, &x, &y).map_err(e2s)?;
        ensure!(got == direct, "polynomial kernel {got} vs direct {direct}");
    }
    let dc = |w: usize| KernelSpec::DcInt { channels: vec!["h".into()], widths: vec![w] };
    let h = vec![0.2, 0.3, 0.5, 0.0];
    let same = kernel_eval(&dc(4), &h, &h).map_err(e2s)?;
    ensure!((same - 1.0).abs() <= 1e-12, "identical histograms give {same}");
    let disjoint = kernel_eval(&dc(4), &[0.5, 0.5, 0.0, 0.0], &[0.0, 0.0, 0.4, 0.6]).map_err(e2s)?;
    ensure!((disjoint - (-1f64).exp()).abs() <= 1e-12, "disjoint histograms give {disjoint}");
    ensure!(histogram_distance(&h, &h) == 0.0, "self distance is not zero");

    let rows = random_rows(&mut r, 30, 5);
    let mut worst = f64::INFINITY;
    for spec in [KernelSpec::Linear, poly, KernelSpec::Rbf { gamma: median_heuristic_gamma(&rows) }] {
        let g = gram(&spec, &rows).map_err(e2s)?;
        let min = jacobi_eigenvalues(to_rows(&g.k)).into_iter().fold(f64::INFINITY, f64::min);
        ensure!(min >= -1e-8, "{} Gram has eigenvalue {min}", spec.kind());
        worst = worst.min(min);
    }
    Ok(format!("200 polynomial pairs exact, DC-Int 1 and e^-1, min eigenvalue {worst:.2e}"))
}

fn criterion_3() -> Check {
    let k = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
    let sol = solve_binary(&k, &[1.0, -1.0], 10.0, 1e-3).map_err(e2s)?;
    ensure!(
        (sol.alpha[0] - 0.5).abs() <= 1e-6 && (sol.alpha[1] - 0.5).abs() <= 1e-6 && sol.bias.abs() <= 1e-6,
        "two-point case gave alpha {:?}, b {}",
        sol.alpha,
        sol.bias
    );
    let mut r = rng(3);
    let mut worst_kkt: f64 = 0.0;
    for p in 0..20 {
        let n = 20 + 2 * p;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..n {
            let y = if i % 2 == 0 { 1.0 } else { -1.0 };
            xs.push(vec![y * 1.5 + r.random_range(-1.0..1.0), r.random_range(-2.0..2.0)]);
            ys.push(y);
        }
        let g = gram(&KernelSpec::Linear, &xs).map_err(e2s)?;
        let mut trace = Vec::new();
        let params = SvmParams { c: 10.0, ..SvmParams::default() };
        let sol = solve_binary_with(&g.k, &ys, params, None, Some(&mut trace)).map_err(e2s)?;
        let kkt = kkt_residual(&to_rows(&g.k), &ys, &sol.alpha, sol.bias, params.c);
        ensure!(kkt < 1e-3, "problem {p}: KKT residual {kkt}");
        ensure!(trace.windows(2).all(|w| w[1] >= w[0]), "problem {p}: dual objective decreased");
        worst_kkt = worst_kkt.max(kkt);
    }
    Ok(format!("two-point alpha (0.5, 0.5) b 0, worst KKT residual {worst_kkt:.2e} over 20 problems"))
}

fn two_kernel_problem(seed: u64, spread: f64) -> Result<(Vec<DMatrix<f64>>, Vec<f64>), String> {
    let mut r = rng(seed);
    let n = 40;
    let y: Vec<f64> = (0..n).map(|i| if i < n / 2 { 1.0 } else { -1.0 }).collect();
    let informative: Vec<Vec<f64>> = y.iter().map(|&l| vec![l + r.random_range(-spread..spread), r.random_range(-1.0..1.0)]).collect();
    let noise = random_rows(&mut r, n, 3);
    let mut grams = Vec::new();
    for rows in [informative, noise] {
        let spec = KernelSpec::Rbf { gamma: median_heuristic_gamma(&rows) };
        grams.push(normalize(&gram(&spec, &rows).map_err(e2s)?).map_err(e2s)?.k);
    }
    Ok((grams, y))
}

fn criterion_4() -> Check {
    let (grams, y) = two_kernel_problem(4, 0.8)?;
    let refs: Vec<&DMatrix<f64>> = grams.iter().collect();
    let svm = SvmParams { c: 10.0, tol: 1e-6, max_iter: None };
    let model = simple_mkl_train(&refs, &y, &[], MklParams { svm, ..MklParams::default() }).map_err(e2s)?;
    for (i, d) in model.weight_trace.iter().enumerate() {
        let s: f64 = d.iter().sum();
        ensure!((s - 1.0).abs() <= 1e-12 && d.iter().all(|&v| v >= 0.0), "iteration {i}: weights {d:?} leave the simplex");
    }
    ensure!(model.objective_trace.windows(2).all(|w| w[1] <= w[0] + 1e-12), "J increased across outer steps");

    // Gradient against central differences of the re-solved dual optimum.
    let tight = SvmParams { c: 10.0, tol: 1e-10, max_iter: None };
    let j_at = |d: &[f64]| -> Result<f64, String> {
        let k = egofuse::mkl::combine(&refs, d);
        Ok(solve_binary_with(&k, &y, tight, None, None).map_err(e2s)?.objective)
    };
    let d0 = [0.6, 0.4];
    let sol = solve_binary_with(&egofuse::mkl::combine(&refs, &d0), &y, tight, None, None).map_err(e2s)?;
    let grad = gradient(&refs, &sol);
    let h = 1e-5;
    let mut worst_rel: f64 = 0.0;
    for m in 0..2 {
        let (mut up, mut down) = (d0, d0);
        up[m] += h;
        down[m] -= h;
        let fd = (j_at(&up)? - j_at(&down)?) / (2.0 * h);
        let rel = (grad[m] - fd).abs() / fd.abs().max(1e-12);
        ensure!(rel <= 1e-4, "gradient {} vs finite difference {fd} (relative {rel:.2e})", grad[m]);
        worst_rel = worst_rel.max(rel);
    }

    let d_inf = model.weights[0];
    ensure!(d_inf >= 0.9, "informative kernel weight {d_inf}");
    let mut best = f64::INFINITY;
    for step in 0..=100 {
        let a = step as f64 / 100.0;
        best = best.min(j_at(&[a, 1.0 - a])?);
    }
    let j = *model.objective_trace.last().unwrap();
    ensure!((j - best).abs() <= 1e-3, "final J {j} vs grid optimum {best}");
    Ok(format!(
        "{} outer steps on the simplex, gradient relative error {worst_rel:.1e}, d_informative {d_inf:.4}, J {j:.6} vs grid {best:.6}",
        model.outer_iterations
    ))
}

fn criterion_5() -> Check {
    ensure!(round_weight(0.5) == 0.0, "w(0.5) = {}", round_weight(0.5));
    let w = round_weight(0.1);
    ensure!((w - 0.5 * 9f64.ln()).abs() <= 1e-12, "w(0.1) = {w}");

    // overlapping classes so the weak learners make mistakes
    let (grams, y) = two_kernel_problem(5, 2.0)?;
    let refs: Vec<&DMatrix<f64>> = grams.iter().collect();
    let params = BoostParams { rounds: 10, seed: 11, ..BoostParams::default() };
    let ens = mkboost_train(&refs, &y, params).map_err(e2s)?;
    for (t, round) in ens.rounds.iter().enumerate() {
        let s: f64 = round.distribution.iter().sum();
        ensure!((s - 1.0).abs() <= 1e-12, "round {t}: distribution sums to {s}");
    }
    let s: f64 = ens.distribution.iter().sum();
    ensure!((s - 1.0).abs() <= 1e-12, "final distribution sums to {s}");

    let pred = boost_predict(&ens, &refs).map_err(e2s)?;
    let err = pred.iter().zip(&y).filter(|(p, y)| p != y).count() as f64 / y.len() as f64;
    let bound: f64 = ens.rounds.iter().filter(|r| r.weight != 0.0).map(|r| 2.0 * (r.error * (1.0 - r.error)).sqrt()).product();
    ensure!(err <= bound, "training error {err} above bound {bound}");

    let again = mkboost_train(&refs, &y, params).map_err(e2s)?;
    ensure!(again == ens, "same seed gave a different ensemble");
    Ok(format!("{} rounds normalized, training error {err:.3} <= bound {bound:.3}, reproducible", ens.rounds.len()))
}

fn criterion_6() -> Check {
    let mut r = rng(6);
    for run in 0..5 {
        let frames: Vec<Vec<f64>> = (0..400)
            .map(|i| {
                let c = (i % 3) as f64 * 3.0;
                (0..4).map(|_| c + r.random_range(-1.0..1.0)).collect()
            })
            .collect();
        let fit = train_ubm(&frames, 1 + run % 4, run as u64).map_err(e2s)?;
        ensure!(
            fit.log_likelihood.windows(2).all(|w| w[1] >= w[0] - 1e-12 * w[0].abs()),
            "run {run}: log-likelihood trace {:?} not monotone",
            fit.log_likelihood
        );
        let stiff = map_adapt(&fit.gmm, &frames[..50], 1e12).map_err(e2s)?;
        for (a, b) in stiff.means.iter().flatten().zip(fit.gmm.means.iter().flatten()) {
            ensure!((a - b).abs() <= 1e-6, "run {run}: tau -> inf moved a mean by {}", (a - b).abs());
        }
    }
    let frames = random_rows(&mut r, 60, 3);
    let single = DiagGmm { weights: vec![1.0], means: vec![vec![5.0; 3]], variances: vec![vec![1.0; 3]] };
    let adapted = map_adapt(&single, &frames, 1e-12).map_err(e2s)?;
    for j in 0..3 {
        let mean = frames.iter().map(|f| f[j]).sum::<f64>() / frames.len() as f64;
        ensure!((adapted.means[0][j] - mean).abs() <= 1e-6, "tau -> 0 mean {} vs data mean {mean}", adapted.means[0][j]);
    }

    let tone: Vec<f64> = (0..24_000).map(|i| 0.5 * (2.0 * std::f64::consts::PI * 1000.0 * i as f64 / 24_000.0).sin()).collect();
    let rows = mfcc(&tone, &MfccConfig::default()).map_err(e2s)?;
    ensure!(rows.len() == 97, "1 s at 24 kHz gave {} frames", rows.len());
    let reference = reference_mfcc(&tone, 24_000.0);
    ensure!(reference.len() == 97, "reference produced {} frames", reference.len());
    let mut worst: f64 = 0.0;
    for (a, b) in rows.iter().zip(&reference) {
        ensure!(a.len() == 39, "row has {} columns", a.len());
        for (x, y) in a.iter().zip(b) {
            worst = worst.max((x - y).abs());
        }
    }
    ensure!(worst <= 1e-6, "MFCC differs from the reference by {worst:.2e}");
    Ok(format!("EM monotone on 5 runs, MAP limits hold, 97 frames, MFCC max deviation {worst:.1e}"))
}

fn cm(rows: &[Vec<u64>]) -> ConfusionMatrix {
    ConfusionMatrix { counts: rows.to_vec() }
}

fn criterion_7() -> Check {
    let cases_k: [(Vec<Vec<u64>>, f64); 3] =
        [(vec![vec![7, 0], vec![0, 5]], 1.0), (vec![vec![25, 25], vec![25, 25]], 0.0), (vec![vec![40, 10], vec![20, 30]], 0.4)];
    for (m, want) in &cases_k {
        let got = kappa(&cm(m)).map_err(e2s)?;
        ensure!((got - want).abs() <= 1e-12, "kappa {m:?} = {got}, want {want}");
    }
    let cases_s: [(Vec<Vec<u64>>, f64); 3] =
        [(vec![vec![4, 0], vec![0, 6]], 1.0), (vec![vec![0, 4], vec![6, 0]], 0.0), (vec![vec![5, 5], vec![3, 3]], 0.75)];
    for (m, want) in &cases_s {
        let got = sic(&cm(m)).map_err(e2s)?;
        ensure!((got - want).abs() <= 1e-12, "SIC {m:?} = {got}, want {want}");
    }

    let mut r = rng(7);
    for trial in 0..100 {
        let c = r.random_range(2..7);
        let mut m: Vec<Vec<u64>> = (0..c).map(|_| (0..c).map(|_| r.random_range(0..30)).collect()).collect();
        for (i, row) in m.iter_mut().enumerate() {
            row[i] += 1;
        }
        let base = evaluate(&cm(&m)).map_err(e2s)?;
        ensure!((base.kappa - reference_kappa(&m)).abs() <= 1e-12, "matrix {trial}: kappa disagrees with the reference");

        let mut perm: Vec<usize> = (0..c).collect();
        perm.shuffle(&mut r);
        let permuted: Vec<Vec<u64>> = (0..c).map(|i| (0..c).map(|j| m[perm[i]][perm[j]]).collect()).collect();
        let k = r.random_range(2..10);
        let scaled: Vec<Vec<u64>> = m.iter().map(|row| row.iter().map(|v| v * k).collect()).collect();
        for (what, other) in [("permutation", permuted), ("scaling", scaled)] {
            let o = evaluate(&cm(&other)).map_err(e2s)?;
            let pairs = [
                (base.accuracy, o.accuracy),
                (base.precision, o.precision),
                (base.recall, o.recall),
                (base.f1, o.f1),
                (base.kappa, o.kappa),
                (base.sic, o.sic),
            ];
            ensure!(pairs.iter().all(|(a, b)| (a - b).abs() <= 1e-12), "matrix {trial}: {what} changed the scores");
        }
    }
    // truth/prediction level permutation through the confusion builder
    let truth = [0, 0, 1, 2, 2, 2];
    let pred = [0, 1, 1, 2, 0, 2];
    let relabel = [2, 0, 1];
    let a = evaluate(&confusion(&truth, &pred, 3).map_err(e2s)?).map_err(e2s)?;
    let t2: Vec<usize> = truth.iter().map(|&v| relabel[v]).collect();
    let p2: Vec<usize> = pred.iter().map(|&v| relabel[v]).collect();
    let b = evaluate(&confusion(&t2, &p2, 3).map_err(e2s)?).map_err(e2s)?;
    ensure!((a.kappa - b.kappa).abs() <= 1e-12 && (a.f1 - b.f1).abs() <= 1e-12, "relabeling classes changed the scores");
    Ok("kappa 1/0/0.4, SIC 1/0/0.75, invariant on 100 random matrices".into())
}

fn criterion_8(corpus: &mut Option<Corpus>) -> Check {
    if corpus.is_none() {
        *corpus = Some(build_corpus()?);
    }
    let c = corpus.as_ref().unwrap();
    let mut cfg = c.cfg.clone();
    cfg.trials = 10;
    let runs = harness::run_trials(&cfg, &c.manifest, &c.table, &Classifier::ALL).map_err(e2s)?;
    let mut parts = Vec::new();
    let mut problems = Vec::new();
    for run in &runs {
        // failed trials count as zero accuracy
        let acc = run.trials.iter().map(|t| t.metrics.as_ref().map_or(0.0, |m| m.accuracy)).sum::<f64>() / run.trials.len() as f64;
        let floor = if run.classifier == Classifier::SimpleMkl { 0.95 } else { 0.90 };
        parts.push(format!("{} {acc:.3}", run.classifier));
        if acc < floor {
            problems.push(format!("{} accuracy {acc:.3} < {floor}", run.classifier));
        }
        if run.leaks() > 0 {
            problems.push(format!("{} has {} leaked accesses", run.classifier, run.leaks()));
        }
        if run.trials.iter().any(|t| t.error.is_none() && t.fit_accesses == 0) {
            problems.push(format!("{} recorded no fit accesses", run.classifier));
        }
    }
    ensure!(problems.is_empty(), "{}", problems.join("; "));
    Ok(format!("{}, zero leaks", parts.join(", ")))
}

fn criterion_9() -> Option<Check> {
    let path = PathBuf::from(std::env::var_os("EGOFUSE_JPL_MANIFEST")?);
    Some((|| {
        let manifest = load_manifest(&path).map_err(e2s)?;
        let out = tempfile::tempdir().map_err(e2s)?;
        let mut cfg = ExperimentConfig::new(&path, out.path());
        if let Ok(t) = std::env::var("EGOFUSE_JPL_TRIALS") {
            cfg.trials = t.parse().map_err(e2s)?;
        }
        let (table, _) = harness::extract(&cfg, &manifest).map_err(e2s)?;
        let runs = harness::run_trials(&cfg, &manifest, &table, &[Classifier::SimpleMkl]).map_err(e2s)?;
        let f1 = runs[0].aggregate.as_ref().ok_or("every trial failed")?.f1;
        ensure!((f1 - 0.93).abs() <= 0.07, "SimpleMKL F1 {f1:.3} outside 0.93 ± 0.07");
        Ok(format!("SimpleMKL F1 {f1:.3} over {} trials", cfg.trials))
    })())
}

fn run(name: &str, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
        Err(format!("panicked: {}", msg.unwrap_or_default()))
    });
    let secs = start.elapsed().as_secs_f64();
    match &outcome {
        Ok(d) => println!("PASS  {name} ({secs:.1}s): {d}"),
        Err(e) => println!("FAIL  {name} ({secs:.1}s): {e}"),
    }
    outcome.is_ok()
}

fn timed(limit: Duration, f: impl FnOnce() -> Check) -> Check {
    let start = Instant::now();
    let detail = f()?;
    let took = start.elapsed();
    ensure!(took <= limit, "took {:.1}s, budget {:.0}s", took.as_secs_f64(), limit.as_secs_f64());
    Ok(detail)
}

fn main() -> ExitCode {
    // `cargo test -- --list` and filters are not meaningful here
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let mut corpus = None;
    let results = [
        run("1 dimensional contracts", || timed(Duration::from_secs(120), || criterion_1(&mut corpus))),
        run("2 kernel suite", criterion_2),
        run("3 svm solver", criterion_3),
        run("4 simple_mkl", || timed(Duration::from_secs(60), criterion_4)),
        run("5 mkboost", criterion_5),
        run("6 audio chain", criterion_6),
        run("7 metrics", criterion_7),
        run("8 end-to-end", || timed(Duration::from_secs(900), || criterion_8(&mut corpus))),
    ];
    let optional = match criterion_9() {
        None => {
            println!("SKIP  9 real corpus: set EGOFUSE_JPL_MANIFEST to run");
            true
        }
        Some(outcome) => run("9 real corpus", || outcome),
    };
    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed == results.len() && optional {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
