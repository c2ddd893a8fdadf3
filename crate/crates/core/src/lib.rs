//! Offline reinforcement learning through Deep Averagers with Costs MDPs.
//!
//! A static experience dataset is compiled into a finite "core-state" MDP
//! whose rewards and transitions are k-nearest-neighbor averages penalized by
//! neighbor distance. The core MDP is solved exactly with data-parallel
//! Jacobi value iteration, and the solved Q table extends to any continuous
//! state through a one-step kNN lookahead.
//!
//! Pipeline:
//!
//! ```text
//! Dataset --build--> NeighborIndex --compile--> CoreMdp --solve--> SolveResult
//!                                                                       |
//!                                       PolicyHandle (lookahead / sKNN) <
//! ```

pub mod compiler;
pub mod dataset;
pub mod envs;
pub mod error;
pub mod harness;
pub mod knn;
pub mod manifest;
pub mod policy;
pub mod reprs;
pub mod solver;
pub mod whatif;

pub use compiler::{compile, CoreMdp, CoreStates, CoverageStats, DacConfig, NeighborCache};
pub use dataset::{Dataset, DatasetFormat, ExperienceTuple};
pub use error::{DacError, ErrorCategory, Result};
pub use knn::{NeighborIndex, NeighborSet};
pub use policy::{Controller, PolicyHandle, PolicySettings, StateRows};
pub use solver::{SolveOptions, SolveResult};
