//! The deployment loop: collect, fit models, train offline, evaluate.

mod config;
mod diagnostics;
mod metrics;
mod run;

pub use config::{AblationMode, RunConfig, StartSource, ABLATION_MODES};
pub use diagnostics::{
    energy_distance, evaluate, mean_std, replay_pairs, trajectory_mse, NextStateModel, ReplayPairs,
    TrueDynamics,
};
pub use metrics::{write_step_log, DeploymentMetrics, RunMetrics, METRIC_COLUMNS};
pub use run::{resume, run, run_in, run_observed, RunOutcome, StepObserver};
