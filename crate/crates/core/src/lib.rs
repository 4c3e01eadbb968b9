//! Robust mean estimation with a small verified dataset, plus a simulator
//! for Byzantine-robust distributed gradient descent built on top of it.
//!
//! The crate splits into:
//! - [`estimator`]: the iterative spectral filter and projection-split mean
//!   estimator, with parameter recommendation;
//! - [`contamination`]: dataset generators, contamination models, attack
//!   strategies, and information-theoretic hard instances;
//! - [`aggregators`]: gradient aggregation rules (master-only, distance
//!   filtering, Zeno scoring, semi-verified);
//! - [`sim`]: the synchronous master/worker training loop;
//! - [`config`] and [`runner`]: experiment configs, sweeps, and CSV/JSON
//!   artifact output used by the `byzshield` binary.

pub mod aggregators;
pub mod config;
pub mod contamination;
pub mod dataio;
pub mod error;
pub mod estimator;
pub mod points;
pub mod rng;
pub mod runner;
pub mod sim;

pub use error::{Error, Result};
pub use points::{PointSet, Vector};
