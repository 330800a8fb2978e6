use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::environments::Env;
use crate::error::{Error, Result};
use crate::numerics::FitConfig;
use crate::trpo::{TrustRegionConfig, BC_LR};
use crate::uncertainty::{PairResample, DEFAULT_ALPHA};

/// Which of the two uncertainty mechanisms are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    /// Label-weighted updates and uncertainty-scaled exploration noise.
    #[default]
    Full,
    /// Label-weighted updates only.
    CoeffOnly,
    /// Uncertainty-scaled exploration noise only.
    ExploreOnly,
    /// Neither.
    None,
}

pub const ABLATION_MODES: [AblationMode; 4] = [
    AblationMode::Full,
    AblationMode::CoeffOnly,
    AblationMode::ExploreOnly,
    AblationMode::None,
];

impl AblationMode {
    pub fn weights_updates(self) -> bool {
        matches!(self, AblationMode::Full | AblationMode::CoeffOnly)
    }

    pub fn explores(self) -> bool {
        matches!(self, AblationMode::Full | AblationMode::ExploreOnly)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AblationMode::Full => "full",
            AblationMode::CoeffOnly => "coeff_only",
            AblationMode::ExploreOnly => "explore_only",
            AblationMode::None => "none",
        }
    }
}

impl fmt::Display for AblationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AblationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ABLATION_MODES
            .iter()
            .copied()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown ablation mode '{s}' (expected full, coeff_only, explore_only or none)"
                ))
            })
    }
}

/// Where fictitious rollouts start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartSource {
    /// Uniform over every stored transition.
    #[default]
    All,
    /// Uniform over the newest batch.
    Newest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub env: String,
    pub deployments: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub ablation: AblationMode,
    pub training_iterations: usize,
    pub optimization_steps: usize,
    pub rollout_length: usize,
    /// Fictitious trajectories per optimization step.
    pub rollouts_per_step: usize,
    pub rollout_start_source: StartSource,
    pub trpo: TrustRegionConfig,
    pub ensemble_size: usize,
    pub labeler_size: usize,
    pub alpha: f64,
    pub pair_resample: PairResample,
    pub dynamics_hidden: Vec<usize>,
    pub labeler_hidden: Vec<usize>,
    pub policy_hidden: Vec<usize>,
    pub value_hidden: Vec<usize>,
    pub model_fit: FitConfig,
    pub bc_fit: FitConfig,
    pub baseline_epochs: usize,
    pub baseline_lr: f64,
    pub const_noise_std: f64,
    pub eval_episodes: usize,
    /// Real/model trajectory pairs used for the model-quality diagnostics.
    pub diagnostic_pairs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: "point_mass".into(),
            deployments: 5,
            batch_size: 2000,
            seed: 0,
            ablation: AblationMode::Full,
            training_iterations: 20,
            optimization_steps: 5,
            rollout_length: 100,
            rollouts_per_step: 10,
            rollout_start_source: StartSource::All,
            trpo: TrustRegionConfig::default(),
            ensemble_size: 5,
            labeler_size: 3,
            alpha: DEFAULT_ALPHA,
            pair_resample: PairResample::PerTrajectory,
            dynamics_hidden: vec![128, 128],
            labeler_hidden: vec![128, 128],
            policy_hidden: vec![64, 64],
            value_hidden: vec![64, 64],
            model_fit: FitConfig::default(),
            bc_fit: FitConfig {
                lr: BC_LR,
                ..FitConfig::default()
            },
            baseline_epochs: 5,
            baseline_lr: 1e-3,
            const_noise_std: 0.01,
            eval_episodes: 5,
            diagnostic_pairs: 10,
        }
    }
}

fn check_fit(name: &str, f: &FitConfig) -> Result<()> {
    if !(f.lr > 0.0) || f.max_epochs == 0 || f.batch_size == 0 || !(f.train_fraction > 0.0 && f.train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "{name}: lr must be positive, max_epochs and batch_size at least 1, train_fraction in (0, 1)"
        )));
    }
    Ok(())
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        Env::by_name(&self.env)?;
        if self.deployments < 1 {
            return Err(Error::Config("deployments must be at least 1".into()));
        }
        if self.batch_size < 100 {
            return Err(Error::Config(format!(
                "batch_size must be at least 100, got {}",
                self.batch_size
            )));
        }
        if self.rollout_length == 0 || self.rollouts_per_step == 0 {
            return Err(Error::Config("rollout_length and rollouts_per_step must be at least 1".into()));
        }
        if self.ensemble_size == 0 {
            return Err(Error::Config("ensemble_size must be at least 1".into()));
        }
        if self.labeler_size < 2 {
            return Err(Error::Config("labeler_size must be at least 2".into()));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::Config("alpha must be positive".into()));
        }
        if self.const_noise_std < 0.0 || !self.const_noise_std.is_finite() {
            return Err(Error::Config("const_noise_std must be a finite non-negative number".into()));
        }
        if self.eval_episodes == 0 || self.diagnostic_pairs == 0 {
            return Err(Error::Config("eval_episodes and diagnostic_pairs must be at least 1".into()));
        }
        self.trpo.validate()?;
        check_fit("model_fit", &self.model_fit)?;
        check_fit("bc_fit", &self.bc_fit)?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config(format!("config key '{path}': {}", e.into_inner()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = RunConfig::from_json(r#"{"env":"point_mass","deployments":5,"batch_size":2000,"seed":1}"#).unwrap();
        assert_eq!(cfg.seed, 1);
        assert_eq!(cfg.ensemble_size, 5);
        assert_eq!(cfg.labeler_size, 3);
        assert_eq!(cfg.alpha, 0.028);
        assert_eq!(cfg.trpo.gae_lambda, 0.95);
        assert_eq!(cfg.ablation, AblationMode::Full);
    }

    #[test]
    fn invalid_values_are_rejected() {
        for bad in [
            r#"{"deployments":0}"#,
            r#"{"batch_size":99}"#,
            r#"{"env":"cartpole"}"#,
            r#"{"labeler_size":1}"#,
            r#"{"trpo":{"delta":-1}}"#,
        ] {
            assert!(matches!(RunConfig::from_json(bad), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn unknown_and_mistyped_keys_are_named() {
        let err = RunConfig::from_json(r#"{"deploymnts":3}"#).unwrap_err().to_string();
        assert!(err.contains("deploymnts"), "{err}");
        let err = RunConfig::from_json(r#"{"batch_size":"big"}"#).unwrap_err().to_string();
        assert!(err.contains("'batch_size'") && err.contains("usize"), "{err}");
        let err = RunConfig::from_json(r#"{"trpo":{"dleta":0.1}}"#).unwrap_err().to_string();
        assert!(err.contains("dleta"), "{err}");
    }

    #[test]
    fn json_roundtrip() {
        let cfg = RunConfig {
            seed: 42,
            ablation: AblationMode::ExploreOnly,
            alpha: 0.1,
            ..RunConfig::default()
        };
        assert_eq!(RunConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn ablation_names_roundtrip() {
        for m in ABLATION_MODES {
            assert_eq!(m.as_str().parse::<AblationMode>().unwrap(), m);
        }
        assert!("half".parse::<AblationMode>().is_err());
    }
}
