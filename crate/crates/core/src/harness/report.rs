//! Result persistence and report rendering.
//!
//! `run` stores one `results/<classifier>.json` per classifier; `report`
//! turns every stored run into CSV tables, confusion matrices and selection
//! histograms. No timestamps are written, so identical runs give identical
//! bytes.

use std::fs;
use std::path::{Path, PathBuf};

use super::trials::ClassifierRun;
use crate::error::{Error, Result};
use crate::metrics::{ConfusionMatrix, MetricsReport};
use crate::mkboost::SelectionHistogram;

pub const RESULTS_DIR: &str = "results";
/// Column order of the comparison table.
pub const COMPARISON_COLUMNS: [&str; 6] = ["A", "P", "R", "κ", "SIC", "F"];

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_results(out_dir: &Path, runs: &[ClassifierRun]) -> Result<Vec<PathBuf>> {
    let dir = out_dir.join(RESULTS_DIR);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    runs.iter()
        .map(|r| {
            let path = dir.join(format!("{}.json", r.classifier));
            let json = serde_json::to_string_pretty(r).map_err(|e| Error::invalid(e.to_string()))?;
            write(&path, &json)?;
            Ok(path)
        })
        .collect()
}

/// Stored runs in classifier order.
pub fn read_results(dir: &Path) -> Result<Vec<ClassifierRun>> {
    let rdir = dir.join(RESULTS_DIR);
    let entries = fs::read_dir(&rdir).map_err(|e| Error::io(&rdir, e))?;
    let mut runs = Vec::new();
    for e in entries {
        let path = e.map_err(|e| Error::io(&rdir, e))?.path();
        if path.extension().is_some_and(|x| x == "json") {
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let run: ClassifierRun =
                serde_json::from_str(&text).map_err(|e| Error::Decode { path: path.clone(), msg: e.to_string() })?;
            runs.push(run);
        }
    }
    if runs.is_empty() {
        return Err(Error::invalid(format!("no results in {}", rdir.display())));
    }
    runs.sort_by_key(|r| r.classifier);
    Ok(runs)
}

pub fn metrics_csv(run: &ClassifierRun) -> String {
    let mut s = format!("trial,seed,{},status\n", MetricsReport::CSV_HEADER);
    for t in &run.trials {
        match (&t.metrics, &t.error) {
            (Some(m), _) => s.push_str(&format!("{},{},{},ok\n", t.trial, t.seed, m.csv_fields())),
            (None, e) => {
                let msg = e.as_deref().unwrap_or("failed").replace([',', '\n'], " ");
                s.push_str(&format!("{},{},,,,,,,failed: {msg}\n", t.trial, t.seed));
            }
        }
    }
    if let Some(a) = &run.aggregate {
        s.push_str(&format!("mean,,{},{} failed\n", a.csv_fields(), run.failed()));
    }
    s
}

fn row(m: &MetricsReport) -> [f64; 6] {
    [m.accuracy, m.precision, m.recall, m.kappa, m.sic, m.f1]
}

pub fn comparison_csv(runs: &[ClassifierRun]) -> String {
    let mut s = format!("classifier,{}\n", COMPARISON_COLUMNS.join(","));
    for r in runs {
        let vals = r.aggregate.as_ref().map(row).map_or_else(
            || vec![String::new(); 6],
            |v| v.iter().map(|x| format!("{x:.4}")).collect(),
        );
        s.push_str(&format!("{},{}\n", r.classifier, vals.join(",")));
    }
    s
}

pub fn comparison_table(runs: &[ClassifierRun]) -> String {
    let mut s = format!("{:<12}", "classifier");
    for c in COMPARISON_COLUMNS {
        s.push_str(&format!(" {c:>7}"));
    }
    s.push('\n');
    for r in runs {
        s.push_str(&format!("{:<12}", r.classifier.name()));
        match &r.aggregate {
            Some(m) => row(m).iter().for_each(|v| s.push_str(&format!(" {v:>7.4}"))),
            None => s.push_str("  (all trials failed)"),
        }
        s.push('\n');
    }
    s
}

/// Confusion counts summed over successful trials.
pub fn pooled_confusion(run: &ClassifierRun) -> Result<Option<ConfusionMatrix>> {
    let mut total: Option<ConfusionMatrix> = None;
    for cm in run.trials.iter().filter_map(|t| t.confusion.as_ref()) {
        match &mut total {
            Some(t) => t.add(cm)?,
            None => total = Some(cm.clone()),
        }
    }
    Ok(total)
}

pub fn pooled_selection(run: &ClassifierRun) -> Option<SelectionHistogram> {
    let mut it = run.trials.iter().filter_map(|t| t.selection.as_ref());
    let mut h = SelectionHistogram::from(it.next()?);
    for s in it {
        h.merge(&SelectionHistogram::from(s));
    }
    Some(h)
}

/// Writes every report file into `dir` and returns their paths.
pub fn report(dir: &Path) -> Result<Vec<PathBuf>> {
    let runs = read_results(dir)?;
    let mut written = Vec::new();
    let mut put = |name: String, text: String| -> Result<()> {
        let p = dir.join(name);
        write(&p, &text)?;
        written.push(p);
        Ok(())
    };
    put("comparison.csv".into(), comparison_csv(&runs))?;
    put("comparison.txt".into(), comparison_table(&runs))?;
    for r in &runs {
        let name = r.classifier.name();
        put(format!("metrics_{name}.csv"), metrics_csv(r))?;
        if let Some(cm) = pooled_confusion(r)? {
            put(format!("confusion_{name}.txt"), cm.render(&r.class_names))?;
        }
        if let Some(h) = pooled_selection(r) {
            put(format!("selection_kernels_{name}.csv"), h.kernel_csv())?;
            put(format!("selection_channels_{name}.csv"), h.channel_csv())?;
        }
    }
    Ok(written)
}
