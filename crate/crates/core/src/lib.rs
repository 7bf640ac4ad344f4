//! Neighborhood-assisted, posterior-adjusted (NAPA) two-sample multiple testing.
//!
//! The crate turns two groups of observations on a spatial lattice into
//! per-site test statistics, estimates a local posterior non-null probability
//! by kernel smoothing jointly over space and an auxiliary statistic, and uses
//! the resulting odds as p-value weights inside a step-up procedure that
//! controls the false discovery rate. Baseline procedures (BH, LAWS, a
//! grouped GAP-style weighting and its combination with LAWS) and a
//! Monte-Carlo harness for power studies are included.
//!
//! The crate is `no_std` (with `alloc`). The default `parallel` feature pulls
//! in `std` and `rayon` to spread per-site work over a thread pool; results
//! are bit-identical with or without it. Builds without `std` take `exp` and
//! `sqrt` from `libm`, whose last-bit rounding can differ from the platform
//! library's.

#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod error;
pub mod grid;
pub mod math;
mod par;
pub mod rng;
pub mod simulate;
pub mod statistics;
pub mod testing;
pub mod weights;

pub use error::{Error, Result};
pub use grid::{RegionBox, RegionSpec, SpatialGrid};
pub use statistics::{SiteStatistics, TwoSampleDataset};
pub use testing::{DecisionSet, Method};
pub use weights::{BandwidthMatrix, WeightField};
