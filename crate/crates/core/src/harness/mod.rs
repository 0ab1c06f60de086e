//! End-to-end driver: configuration, extraction, trials, reports and the
//! synthetic corpus.

pub mod config;
pub mod extract;
pub mod report;
pub mod synth;
pub mod trials;

pub use config::{load_config, parse_config, Classifier, ExperimentConfig, FeatureChannel, KernelKind};
pub use extract::{cache_dir, extract, extract_segment, features_path, worker_pool, ExtractStats};
pub use report::{read_results, report, write_results};
pub use synth::synth_dataset;
pub use trials::{prepare_trial, run_trials, trial_seed, Audit, ClassifierRun, PreparedTrial, TrialResult};
