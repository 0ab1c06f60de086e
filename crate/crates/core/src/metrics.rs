//! Confusion matrices and classification scores.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows are ground truth, columns are predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(classes: usize) -> Self {
        ConfusionMatrix { counts: vec![vec![0; classes]; classes] }
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        self.counts.iter().map(|r| r[j]).sum()
    }

    pub fn add(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes() != self.classes() {
            return Err(Error::DimensionMismatch { expected: self.classes(), got: other.classes() });
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }

    /// Row-percentage rendering with class names.
    pub fn render(&self, names: &[String]) -> String {
        let width = names.iter().map(|n| n.len()).max().unwrap_or(0).max(6);
        let mut s = format!("{:>width$}", "");
        for j in 0..self.classes() {
            s.push_str(&format!(" {:>width$}", name(names, j)));
        }
        s.push('\n');
        for i in 0..self.classes() {
            s.push_str(&format!("{:>width$}", name(names, i)));
            let rs = self.row_sum(i);
            for j in 0..self.classes() {
                let p = if rs == 0 { 0.0 } else { 100.0 * self.counts[i][j] as f64 / rs as f64 };
                s.push_str(&format!(" {:>width$.1}", p));
            }
            s.push('\n');
        }
        s
    }
}

fn name(names: &[String], i: usize) -> String {
    names.get(i).cloned().unwrap_or_else(|| i.to_string())
}

pub fn confusion(truth: &[usize], pred: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    if truth.len() != pred.len() {
        return Err(Error::DimensionMismatch { expected: truth.len(), got: pred.len() });
    }
    if truth.is_empty() {
        return Err(Error::invalid("confusion matrix needs at least one sample"));
    }
    let mut cm = ConfusionMatrix::zeros(classes);
    for (&t, &p) in truth.iter().zip(pred) {
        if t >= classes || p >= classes {
            return Err(Error::invalid(format!("label {} out of range for {classes} classes", t.max(p))));
        }
        cm.counts[t][p] += 1;
    }
    Ok(cm)
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 { 0.0 } else { a / b }
}

fn f1(p: f64, r: f64) -> f64 {
    ratio(2.0 * p * r, p + r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_class: Vec<(f64, f64, f64)>,
}

/// Accuracy plus macro-averaged precision, recall and F1. Per-class F1 is
/// the harmonic mean of that class's P and R; the macro F is the harmonic
/// mean of macro P and macro R.
pub fn prf(cm: &ConfusionMatrix) -> Result<Prf> {
    let total = cm.total() as f64;
    if total == 0.0 {
        return Err(Error::invalid("empty confusion matrix"));
    }
    let c = cm.classes();
    let per_class: Vec<(f64, f64, f64)> = (0..c)
        .map(|i| {
            let tp = cm.counts[i][i] as f64;
            let p = ratio(tp, cm.col_sum(i) as f64);
            let r = ratio(tp, cm.row_sum(i) as f64);
            (p, r, f1(p, r))
        })
        .collect();
    let precision = per_class.iter().map(|v| v.0).sum::<f64>() / c as f64;
    let recall = per_class.iter().map(|v| v.1).sum::<f64>() / c as f64;
    let trace: u64 = (0..c).map(|i| cm.counts[i][i]).sum();
    Ok(Prf { accuracy: trace as f64 / total, precision, recall, f1: f1(precision, recall), per_class })
}

/// Cohen's kappa; when chance agreement is 1 the result is 1 for perfect
/// agreement and 0 otherwise.
pub fn kappa(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total() as f64;
    if total == 0.0 {
        return Err(Error::invalid("empty confusion matrix"));
    }
    let c = cm.classes();
    let p0 = (0..c).map(|i| cm.counts[i][i] as f64).sum::<f64>() / total;
    let pe = (0..c).map(|i| (cm.row_sum(i) as f64 / total) * (cm.col_sum(i) as f64 / total)).sum::<f64>();
    if (1.0 - pe).abs() < 1e-15 {
        return Ok(if (p0 - 1.0).abs() < 1e-15 { 1.0 } else { 0.0 });
    }
    Ok((p0 - pe) / (1.0 - pe))
}

/// Squared-deviation score of the diagonal row percentages from 100.
pub fn sic(cm: &ConfusionMatrix) -> Result<f64> {
    let c = cm.classes();
    if c == 0 {
        return Err(Error::invalid("empty confusion matrix"));
    }
    let mut acc = 0.0;
    for i in 0..c {
        let rs = cm.row_sum(i);
        if rs == 0 {
            return Err(Error::invalid(format!("class {i} has no ground-truth samples")));
        }
        let v = 100.0 * cm.counts[i][i] as f64 / rs as f64;
        acc += (v - 100.0).powi(2);
    }
    Ok(1.0 - acc / (c as f64 * 100.0 * 100.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub kappa: f64,
    pub sic: f64,
    pub per_class: Vec<(f64, f64, f64)>,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "accuracy,precision,recall,kappa,sic,f1";

    pub fn csv_fields(&self) -> String {
        format!(
            "{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.accuracy, self.precision, self.recall, self.kappa, self.sic, self.f1
        )
    }

    /// Field-wise mean of several reports.
    pub fn mean(reports: &[MetricsReport]) -> Option<MetricsReport> {
        let n = reports.len() as f64;
        let first = reports.first()?;
        let avg = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        let per_class = (0..first.per_class.len())
            .map(|i| {
                let g = |k: usize| {
                    reports
                        .iter()
                        .map(|r| [r.per_class[i].0, r.per_class[i].1, r.per_class[i].2][k])
                        .sum::<f64>()
                        / n
                };
                (g(0), g(1), g(2))
            })
            .collect();
        Some(MetricsReport {
            accuracy: avg(|r| r.accuracy),
            precision: avg(|r| r.precision),
            recall: avg(|r| r.recall),
            f1: avg(|r| r.f1),
            kappa: avg(|r| r.kappa),
            sic: avg(|r| r.sic),
            per_class,
        })
    }
}

pub fn evaluate(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let p = prf(cm)?;
    Ok(MetricsReport {
        accuracy: p.accuracy,
        precision: p.precision,
        recall: p.recall,
        f1: p.f1,
        kappa: kappa(cm)?,
        sic: sic(cm)?,
        per_class: p.per_class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cm(rows: &[&[u64]]) -> ConfusionMatrix {
        ConfusionMatrix { counts: rows.iter().map(|r| r.to_vec()).collect() }
    }

    #[test]
    fn tally() {
        let m = confusion(&[0, 0, 1, 1], &[0, 1, 1, 1], 2).unwrap();
        assert_eq!(m, cm(&[&[1, 1], &[0, 2]]));
        assert_eq!(m.total(), 4);
        let d = confusion(&[0, 1, 2, 1], &[0, 1, 2, 1], 3).unwrap();
        assert_eq!(d, cm(&[&[1, 0, 0], &[0, 2, 0], &[0, 0, 1]]));
        assert!(confusion(&[0, 3], &[0, 1], 3).is_err());
        assert!(confusion(&[], &[], 3).is_err());
        assert!(confusion(&[0], &[0, 1], 3).is_err());
    }

    #[test]
    fn hand_tallied_prf() {
        let p = prf(&cm(&[&[1, 1], &[0, 2]])).unwrap();
        assert_eq!(p.accuracy, 0.75);
        assert_eq!(p.per_class[0].0, 1.0);
        assert_eq!(p.per_class[0].1, 0.5);
        assert!((p.per_class[1].0 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(p.per_class[1].1, 1.0);
        assert!((p.precision - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(p.recall, 0.75);
        let perfect = prf(&cm(&[&[3, 0], &[0, 4]])).unwrap();
        assert_eq!((perfect.accuracy, perfect.precision, perfect.recall, perfect.f1), (1.0, 1.0, 1.0, 1.0));
        let absent = prf(&cm(&[&[2, 0, 0], &[0, 2, 0], &[0, 0, 0]])).unwrap();
        assert_eq!(absent.per_class[2], (0.0, 0.0, 0.0));
        assert!((absent.precision - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn kappa_cases() {
        assert_eq!(kappa(&cm(&[&[5, 0], &[0, 5]])).unwrap(), 1.0);
        assert_eq!(kappa(&cm(&[&[25, 25], &[25, 25]])).unwrap(), 0.0);
        assert!((kappa(&cm(&[&[40, 10], &[20, 30]])).unwrap() - 0.4).abs() < 1e-12);
        assert_eq!(kappa(&cm(&[&[4, 0], &[0, 0]])).unwrap(), 1.0);
    }

    #[test]
    fn sic_cases() {
        assert_eq!(sic(&cm(&[&[5, 0], &[0, 5]])).unwrap(), 1.0);
        assert_eq!(sic(&cm(&[&[0, 5], &[5, 0]])).unwrap(), 0.0);
        assert_eq!(sic(&cm(&[&[5, 5], &[5, 5]])).unwrap(), 0.75);
        assert!(sic(&cm(&[&[5, 0], &[0, 0]])).is_err());
    }

    fn random_cm() -> impl Strategy<Value = ConfusionMatrix> {
        (2usize..5).prop_flat_map(|c| {
            proptest::collection::vec(proptest::collection::vec(0u64..20, c), c).prop_map(|mut rows| {
                for (i, r) in rows.iter_mut().enumerate() {
                    r[i] += 1;
                }
                ConfusionMatrix { counts: rows }
            })
        })
    }

    proptest! {
        #[test]
        fn permutation_invariance(m in random_cm(), shift in 1usize..4) {
            let c = m.classes();
            let perm: Vec<usize> = (0..c).map(|i| (i + shift) % c).collect();
            let mut p = ConfusionMatrix::zeros(c);
            for i in 0..c {
                for j in 0..c {
                    p.counts[perm[i]][perm[j]] = m.counts[i][j];
                }
            }
            let (a, b) = (evaluate(&m).unwrap(), evaluate(&p).unwrap());
            for (x, y) in [(a.accuracy, b.accuracy), (a.precision, b.precision), (a.recall, b.recall),
                           (a.f1, b.f1), (a.kappa, b.kappa), (a.sic, b.sic)] {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn scaling_invariance(m in random_cm(), k in 2u64..7) {
            let s = ConfusionMatrix { counts: m.counts.iter().map(|r| r.iter().map(|v| v * k).collect()).collect() };
            let (a, b) = (evaluate(&m).unwrap(), evaluate(&s).unwrap());
            for (x, y) in [(a.accuracy, b.accuracy), (a.precision, b.precision), (a.recall, b.recall),
                           (a.f1, b.f1), (a.kappa, b.kappa), (a.sic, b.sic)] {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn ranges(m in random_cm()) {
            let r = evaluate(&m).unwrap();
            prop_assert!(r.kappa <= r.accuracy + 1e-12);
            prop_assert!((-1.0..=1.0).contains(&r.kappa));
            for v in [r.accuracy, r.precision, r.recall, r.f1, r.sic] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
