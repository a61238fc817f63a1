//! Incremental subspace identification with GROUSE.
//!
//! The crate estimates a `d`-dimensional subspace of `R^n` from a stream of
//! vectors drawn from it, observed either in full or on random subsets of
//! coordinates, by applying one rank-one rotation of an orthonormal basis
//! per sample. Alongside the algorithm it carries the tooling to check its
//! convergence behaviour numerically: subspace metrics, Monte-Carlo
//! validators for the sampling conditions, and a seeded experiment harness.

pub mod basis;
pub mod error;
pub mod full;
pub mod harness;
pub mod io;
pub mod lab;
pub mod linalg;
pub mod metrics;
pub mod partial;
pub mod sampling;
pub mod trajectory;

pub use basis::Basis;
pub use error::{Error, Result};
pub use partial::{GateMode, Observation, StepRecord, StreamConfig};
pub use trajectory::{StepSummary, TrialResult};
