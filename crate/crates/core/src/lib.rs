//! Fairness-aware aggregation for federated learning.
//!
//! The server's choice of mixing coefficients is treated as an online
//! decision on the probability simplex: clients report their local losses,
//! the losses are mapped into a bounded response, and an online learner picks
//! the next mixing vector. This crate contains
//!
//! - [`simplex`]: the decision space and its projections,
//! - [`transform`]: CDF-based bounded responses,
//! - [`decision`]: decision losses, gradients and the doubly robust estimator,
//! - [`aggregators`]: the baseline and adaptive update strategies,
//! - [`federation`]: a deterministic simulator of cross-silo and cross-device training,
//! - [`metrics`]: regret and client-level fairness statistics.

pub mod aggregators;
pub mod decision;
pub mod error;
pub mod exec;
pub mod federation;
pub mod metrics;
pub mod rng;
pub mod simplex;
pub mod transform;

pub use error::{Error, Result};
pub use simplex::SimplexVector;
