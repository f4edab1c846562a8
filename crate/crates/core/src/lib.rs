//! Post-processing for binary classifiers that abstains on or flips baseline
//! predictions so that group fairness, per-group abstention budgets and
//! per-group no-harm guarantees hold exactly on the training set.
//!
//! The pipeline has two stages:
//!
//! 1. [`solver`] finds optimal abstain/flip decisions with an exact integer
//!    program over per-cell counts ([`cells`]), and [`adjust`] canonicalizes
//!    the within-cell assignment by baseline confidence.
//! 2. [`surrogate`] distills the canonical decisions into an abstention model
//!    and a flip model that compose with the [`baseline`] into a deployable
//!    decision rule.
//!
//! [`feasibility`] holds the closed-form feasibility conditions and
//! [`metrics`] the unconditioned fairness evaluation.

pub mod adjust;
pub mod baseline;
pub mod cells;
pub mod data;
mod error;
pub mod exact;
pub mod feasibility;
pub mod metrics;
pub mod mlp;
pub mod solver;
pub mod surrogate;

pub use error::{FanError, Result};

/// Binary label or prediction, always 0 or 1.
pub type Label = u8;

/// Index of a protected group, `0..n_groups`.
pub type GroupId = usize;
