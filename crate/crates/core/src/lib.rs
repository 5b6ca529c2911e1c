//! Time-aware map matching for low-sampling-rate GPS trajectories.
//!
//! The pipeline matches GPS fixes to road segments with a gravity model,
//! learns per-segment travel times from the fixes themselves, and
//! reconstructs the path between consecutive fixes by minimizing a
//! time-aware cost instead of plain distance. Shortest- and fastest-path
//! baselines plus an evaluation harness (accuracy, middle-point test,
//! temporal alignment) round out the crate.

pub mod enrich;
pub mod error;
pub mod eval;
pub mod geom;
pub mod matcher;
pub mod pipeline;
pub mod roadnet;
pub mod router;
pub mod spatial;

pub use error::{Error, Result};
