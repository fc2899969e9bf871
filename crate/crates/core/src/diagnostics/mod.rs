//! Distribution- and moment-level measurements.
//!
//! Distances between 2D laws are computed on histograms over a fixed box:
//! [`build_target_grid`] discretizes `exp(-U)`, [`bin_samples`] bins an
//! ensemble, and [`wasserstein2_grid`] solves the exact transport problem
//! between the two.

mod grid;
mod moments;
mod transport;

pub use grid::{bin_samples, build_target_grid, target_coverage, tv_distance_grid, Binned, GridMeasure, GridSpec};
pub use moments::{reference_error, BatchMeans, MomentAccumulator};
pub use transport::{transport_plan, wasserstein2_grid, TransportPlan};
