//! Deployment-constrained model-based reinforcement learning.
//!
//! A dynamics ensemble generates fictitious rollouts, a separate ensemble of
//! Gaussian-output networks labels each step with an uncertainty weight in
//! `(0, 1]`, and a trust-region policy step optimizes the weighted advantage
//! surrogate. Deployments collect data with noise scaled by the labeler's
//! prediction error. Tabular tools verify the value-difference bounds that
//! motivate the weighting.

pub mod error;
pub mod numerics;

pub use error::{Error, Result};
pub mod environments;
pub mod harness;
pub mod dynamics_model;
pub mod explorer;
pub mod trpo;
pub mod uncertainty;
pub mod bounds_verifier;
pub mod orchestrator;
