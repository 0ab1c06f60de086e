pub mod audio;
pub mod data;
pub mod encoding;
pub mod error;
pub mod flow;
pub mod frame;
pub mod harness;
pub mod kernels;
pub mod metrics;
pub mod mkboost;
pub mod mkl;
pub mod spectral;
pub mod svm;
pub mod video;

pub use error::{Error, Result};
