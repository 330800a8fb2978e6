//! Deployment-time data collection and batch bookkeeping.

mod collect;
mod policy;
mod store;

pub use collect::{collect_batch, novelty, CollectOptions, CollectPolicy, CollectReport, Novelty, CONST_NOISE_STD};
pub use policy::{gaussian_log_prob, GaussianPolicy, PolicySample};
pub use store::{DataStore, Transition};
