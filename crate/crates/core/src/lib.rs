//! Numerics for the continuum cascade model: the height-distribution
//! recurrence and its traveling-wave analysis, exact series expansions,
//! Monte Carlo samplers for cascade trees and discrete cascade graphs, and
//! size statistics.

pub mod grid;
pub mod manifest;
pub mod mc;
pub mod recurrence;
pub mod rng;
pub mod series;
pub mod size_stats;
pub mod stats;
pub mod wave;

pub use grid::{GridError, GridFunction, GridSpec};
pub use manifest::Manifest;
pub use recurrence::{RecurrenceConfig, RecurrenceError, RecurrenceRun};
pub use rng::SeedStream;
pub use series::SeriesPoly;
pub use stats::Estimate;
