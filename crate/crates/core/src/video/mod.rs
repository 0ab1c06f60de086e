//! Video descriptors: GOFF, VIF, Log-C windows and cuboids.

pub mod cuboid;
pub mod goff;
pub mod logc;
pub mod vif;

pub use cuboid::{compute_cuboids, CuboidDescriptorSet, CuboidParams, InterestPoint};
pub use goff::{compute_goff, GoffVector, GOFF_DIM};
pub use logc::{compute_logc_windows, LOGC_DIM};
pub use vif::{compute_vif, VifVector, VIF_DIM};

/// Default GOFF grid.
pub const GOFF_GRID: (usize, usize) = (8, 8);
