//! Experiment configuration: UTF-8 `key = value` lines, `#` starts a comment.
//!
//! ```text
//! manifest        = data/manifest.tsv   # relative paths resolve against the config file
//! output_dir      = out
//! channels        = GOFF,VIF,LogC,Cuboid,Audio
//! classifier      = simple_mkl          # svm_poly | svm_hist | simple_mkl | mkboost
//! kernels         = linear,polynomial,rbf,dc_int
//! trials          = 100
//! train_fraction  = 0.75
//! seed            = 0
//! c_grid          = 0.1,1,10,100
//! cv_folds        = 3
//! flow_dir        = flows               # optional precomputed FLW1 files named <id>.flw
//! logc_codebook   = 300
//! cuboid_codebook = 500
//! pca_dim         = 128
//! cuboid_pca_dim  = 100
//! ubm_mixtures    = 16
//! boost_rounds    = 20
//! boost_fraction  = 0.5
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeatureChannel {
    Goff,
    Vif,
    LogC,
    Cuboid,
    Audio,
}

impl FeatureChannel {
    pub const ALL: [FeatureChannel; 5] =
        [FeatureChannel::Goff, FeatureChannel::Vif, FeatureChannel::LogC, FeatureChannel::Cuboid, FeatureChannel::Audio];

    pub fn name(self) -> &'static str {
        match self {
            FeatureChannel::Goff => "GOFF",
            FeatureChannel::Vif => "VIF",
            FeatureChannel::LogC => "LogC",
            FeatureChannel::Cuboid => "Cuboid",
            FeatureChannel::Audio => "Audio",
        }
    }

    /// Name of the raw channel in the feature cache.
    pub fn cache_name(self) -> &'static str {
        match self {
            FeatureChannel::Goff => "GOFF",
            FeatureChannel::Vif => "VIF",
            FeatureChannel::LogC => "LogC-raw-windows",
            FeatureChannel::Cuboid => "Cuboid-raw-descriptors",
            FeatureChannel::Audio => "Audio-frames",
        }
    }

    /// Channels whose per-trial representation is a BoW histogram.
    pub fn is_histogram(self) -> bool {
        matches!(self, FeatureChannel::LogC | FeatureChannel::Cuboid)
    }

    /// Channels that store one row per element rather than one per segment.
    pub fn is_set_valued(self) -> bool {
        matches!(self, FeatureChannel::LogC | FeatureChannel::Cuboid | FeatureChannel::Audio)
    }
}

impl FromStr for FeatureChannel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureChannel::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::config(format!("unknown channel {s:?}")))
    }
}

impl fmt::Display for FeatureChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Classifier {
    SvmPoly,
    SvmHist,
    SimpleMkl,
    MkBoost,
}

impl Classifier {
    pub const ALL: [Classifier; 4] = [Classifier::SvmPoly, Classifier::SvmHist, Classifier::SimpleMkl, Classifier::MkBoost];

    pub fn name(self) -> &'static str {
        match self {
            Classifier::SvmPoly => "svm_poly",
            Classifier::SvmHist => "svm_hist",
            Classifier::SimpleMkl => "simple_mkl",
            Classifier::MkBoost => "mkboost",
        }
    }
}

impl FromStr for Classifier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Classifier::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::config(format!("unknown classifier {s:?}")))
    }
}

impl fmt::Display for Classifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Kernel kinds instantiated per channel in the MKL/MKBoost bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum KernelKind {
    Linear,
    Polynomial,
    Rbf,
    DcInt,
}

impl KernelKind {
    pub const ALL: [KernelKind; 4] = [KernelKind::Linear, KernelKind::Polynomial, KernelKind::Rbf, KernelKind::DcInt];

    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Linear => "linear",
            KernelKind::Polynomial => "polynomial",
            KernelKind::Rbf => "rbf",
            KernelKind::DcInt => "dc_int",
        }
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        KernelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(format!("unknown kernel kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub manifest: PathBuf,
    pub output_dir: PathBuf,
    pub channels: Vec<FeatureChannel>,
    pub classifier: Classifier,
    pub kernels: Vec<KernelKind>,
    pub trials: usize,
    pub train_fraction: f64,
    pub seed: u64,
    pub c_grid: Vec<f64>,
    pub cv_folds: usize,
    pub flow_dir: Option<PathBuf>,
    pub logc_codebook: usize,
    pub cuboid_codebook: usize,
    pub pca_dim: usize,
    pub cuboid_pca_dim: usize,
    pub ubm_mixtures: usize,
    pub boost_rounds: usize,
    pub boost_fraction: f64,
}

impl ExperimentConfig {
    /// Defaults with the given manifest and output directory.
    pub fn new(manifest: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            manifest: manifest.into(),
            output_dir: output_dir.into(),
            channels: FeatureChannel::ALL.to_vec(),
            classifier: Classifier::SimpleMkl,
            kernels: KernelKind::ALL.to_vec(),
            trials: 100,
            train_fraction: 0.75,
            seed: 0,
            c_grid: crate::svm::C_GRID.to_vec(),
            cv_folds: crate::svm::CV_FOLDS,
            flow_dir: None,
            logc_codebook: crate::encoding::LOGC_CODEBOOK,
            cuboid_codebook: crate::encoding::CUBOID_CODEBOOK,
            pca_dim: crate::encoding::PCA_DIM,
            cuboid_pca_dim: crate::encoding::CUBOID_PCA_DIM,
            ubm_mixtures: crate::audio::DEFAULT_MIXTURES,
            boost_rounds: crate::mkboost::DEFAULT_ROUNDS,
            boost_fraction: crate::mkboost::DEFAULT_SAMPLE_FRACTION,
        }
    }

    pub fn has(&self, ch: FeatureChannel) -> bool {
        self.channels.contains(&ch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::config("trials must be >= 1"));
        }
        if self.channels.is_empty() {
            return Err(Error::config("no feature channels enabled"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::config("train_fraction must be in (0, 1)"));
        }
        if self.c_grid.is_empty() || self.c_grid.iter().any(|c| !(*c > 0.0)) {
            return Err(Error::config("c_grid must hold positive values"));
        }
        if self.cv_folds < 2 {
            return Err(Error::config("cv_folds must be >= 2"));
        }
        if self.kernels.is_empty() {
            return Err(Error::config("kernel bank is empty"));
        }
        if self.classifier == Classifier::SvmHist && !self.channels.iter().any(|c| c.is_histogram()) {
            return Err(Error::config("svm_hist needs a histogram channel (LogC or Cuboid)"));
        }
        if !(self.boost_fraction > 0.0 && self.boost_fraction <= 1.0) || self.boost_rounds == 0 {
            return Err(Error::config("boost_fraction must be in (0, 1] and boost_rounds >= 1"));
        }
        let sizes = [self.logc_codebook, self.cuboid_codebook, self.pca_dim, self.cuboid_pca_dim, self.ubm_mixtures];
        if sizes.contains(&0) {
            return Err(Error::config("codebook, PCA and mixture sizes must be positive"));
        }
        Ok(())
    }
}

fn list<T: FromStr<Err = Error>>(v: &str) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for item in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let parsed = item.parse()?;
        out.push(parsed);
    }
    Ok(out)
}

fn number<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::config(format!("{key}: cannot parse {v:?}")))
}

pub fn parse_config(text: &str, base: &Path) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::new("", "");
    let (mut have_manifest, mut have_output) = (false, false);
    let resolve = |v: &str| {
        let p = PathBuf::from(v);
        if p.is_absolute() { p } else { base.join(p) }
    };
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::config(format!("line {}: expected key = value", n + 1)));
        };
        let (key, value) = (key.trim(), value.trim());
        match key {
            "manifest" => {
                cfg.manifest = resolve(value);
                have_manifest = true;
            }
            "output_dir" => {
                cfg.output_dir = resolve(value);
                have_output = true;
            }
            "flow_dir" => cfg.flow_dir = Some(resolve(value)),
            "channels" => cfg.channels = list(value)?,
            "classifier" => cfg.classifier = value.parse()?,
            "kernels" => cfg.kernels = list(value)?,
            "c_grid" => {
                cfg.c_grid = value.split(',').map(|v| number::<f64>(key, v.trim())).collect::<Result<_>>()?;
            }
            "trials" => cfg.trials = number(key, value)?,
            "train_fraction" => cfg.train_fraction = number(key, value)?,
            "seed" => cfg.seed = number(key, value)?,
            "cv_folds" => cfg.cv_folds = number(key, value)?,
            "logc_codebook" => cfg.logc_codebook = number(key, value)?,
            "cuboid_codebook" => cfg.cuboid_codebook = number(key, value)?,
            "pca_dim" => cfg.pca_dim = number(key, value)?,
            "cuboid_pca_dim" => cfg.cuboid_pca_dim = number(key, value)?,
            "ubm_mixtures" => cfg.ubm_mixtures = number(key, value)?,
            "boost_rounds" => cfg.boost_rounds = number(key, value)?,
            "boost_fraction" => cfg.boost_fraction = number(key, value)?,
            other => return Err(Error::config(format!("line {}: unknown key {other:?}", n + 1))),
        }
    }
    if !have_manifest {
        return Err(Error::config("missing key: manifest"));
    }
    if !have_output {
        return Err(Error::config("missing key: output_dir"));
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text, path.parent().unwrap_or(Path::new(".")))
}
