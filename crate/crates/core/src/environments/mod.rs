//! Ground-truth environments: two small continuous-control tasks with
//! analytic reward functions, and exactly solvable tabular MDPs.

mod pendulum;
mod point_mass;
mod tabular;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

pub use pendulum::Pendulum;
pub use point_mass::PointMass;
pub use tabular::{exact_occupancy, exact_value, TabularMdp, TabularMdpDoc, TabularPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub state_dim: usize,
    pub action_dim: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    pub horizon: usize,
}

impl EnvSpec {
    pub fn clip_action(&self, action: &[f64]) -> Vec<f64> {
        action
            .iter()
            .zip(self.action_low.iter().zip(&self.action_high))
            .map(|(a, (lo, hi))| a.clamp(*lo, *hi))
            .collect()
    }

    pub fn action_in_bounds(&self, action: &[f64]) -> bool {
        action
            .iter()
            .zip(self.action_low.iter().zip(&self.action_high))
            .all(|(a, (lo, hi))| lo <= a && a <= hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: Vec<f64>,
    pub reward: f64,
    /// The next state is terminal (no bootstrapping past it).
    pub terminal: bool,
    /// Episode is over: terminal or the horizon was reached.
    pub done: bool,
}

/// A deterministic continuous-control environment selected by name.
#[derive(Debug, Clone, PartialEq)]
pub enum Env {
    PointMass(PointMass),
    Pendulum(Pendulum),
}

pub const ENV_NAMES: [&str; 2] = ["point_mass", "pendulum"];

impl Env {
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "point_mass" => Ok(Env::PointMass(PointMass::new())),
            "pendulum" => Ok(Env::Pendulum(Pendulum::new())),
            other => Err(Error::Config(format!(
                "unknown environment {other:?}; expected one of {ENV_NAMES:?}"
            ))),
        }
    }

    pub fn spec(&self) -> &EnvSpec {
        match self {
            Env::PointMass(e) => e.spec(),
            Env::Pendulum(e) => e.spec(),
        }
    }

    /// Draws an initial state from the environment's start distribution.
    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            Env::PointMass(e) => e.reset(rng),
            Env::Pendulum(e) => e.reset(rng),
        }
    }

    /// Mean of the start distribution.
    pub fn initial_mean(&self) -> Vec<f64> {
        match self {
            Env::PointMass(e) => e.initial_mean(),
            Env::Pendulum(e) => e.initial_mean(),
        }
    }

    /// Physics only. `action` must already be clipped.
    pub fn transition(&self, state: &[f64], action: &[f64]) -> Vec<f64> {
        match self {
            Env::PointMass(e) => e.transition(state, action),
            Env::Pendulum(e) => e.transition(state, action),
        }
    }

    /// Analytic reward, also used to relabel model rollouts.
    pub fn reward(&self, state: &[f64], action: &[f64], next_state: &[f64]) -> f64 {
        match self {
            Env::PointMass(e) => e.reward(state, action, next_state),
            Env::Pendulum(e) => e.reward(state, action, next_state),
        }
    }

    pub fn is_terminal(&self, state: &[f64]) -> bool {
        match self {
            Env::PointMass(_) => false,
            Env::Pendulum(e) => e.is_terminal(state),
        }
    }

    /// One environment step at episode time `t` (0-based). Actions are
    /// clipped to the bounds before the physics sees them.
    pub fn step(&self, state: &[f64], action: &[f64], t: usize) -> Result<StepOutcome> {
        let spec = self.spec();
        check_dim("Env::step (state)", spec.state_dim, state.len())?;
        check_dim("Env::step (action)", spec.action_dim, action.len())?;
        if let Some(bad) = state.iter().chain(action).find(|v| !v.is_finite()) {
            return Err(Error::EnvFault(format!(
                "{}: non-finite input {bad} (state {state:?}, action {action:?})",
                spec.name
            )));
        }
        let action = spec.clip_action(action);
        let next_state = self.transition(state, &action);
        if next_state.iter().any(|v| !v.is_finite()) {
            return Err(Error::EnvFault(format!(
                "{}: non-finite next state {next_state:?} from state {state:?}, action {action:?}",
                spec.name
            )));
        }
        let reward = self.reward(state, &action, &next_state);
        let terminal = self.is_terminal(&next_state);
        Ok(StepOutcome {
            done: terminal || t + 1 >= spec.horizon,
            next_state,
            reward,
            terminal,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lookup_by_name() {
        assert_eq!(Env::by_name("point_mass").unwrap().spec().state_dim, 4);
        assert_eq!(Env::by_name("pendulum").unwrap().spec().state_dim, 3);
        assert!(matches!(Env::by_name("hopper"), Err(Error::Config(_))));
    }

    #[test]
    fn point_mass_starts_at_origin() {
        let env = Env::by_name("point_mass").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(env.reset(&mut rng), vec![0.0; 4]);
    }

    #[test]
    fn point_mass_at_rest_has_zero_reward() {
        let env = Env::by_name("point_mass").unwrap();
        let out = env.step(&[0.0; 4], &[0.0, 0.0], 0).unwrap();
        assert_eq!(out.next_state, vec![0.0; 4]);
        assert_eq!(out.reward, 0.0);
        assert!(!out.done);
    }

    #[test]
    fn pendulum_reset_is_seed_deterministic() {
        let env = Env::by_name("pendulum").unwrap();
        let a = env.reset(&mut ChaCha8Rng::seed_from_u64(11));
        let b = env.reset(&mut ChaCha8Rng::seed_from_u64(11));
        assert_eq!(a, b);
    }

    #[test]
    fn pendulum_upright_is_fixed_point() {
        let env = Env::by_name("pendulum").unwrap();
        let mut s = vec![1.0, 0.0, 0.0];
        for t in 0..50 {
            s = env.step(&s, &[0.0], t).unwrap().next_state;
        }
        assert_eq!(s, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn step_is_deterministic_and_clips() {
        for env in [Env::by_name("point_mass").unwrap(), Env::by_name("pendulum").unwrap()] {
            let spec = env.spec().clone();
            let s = env.reset(&mut ChaCha8Rng::seed_from_u64(2));
            let big = vec![50.0; spec.action_dim];
            let a = env.step(&s, &big, 0).unwrap();
            let b = env.step(&s, &big, 0).unwrap();
            assert_eq!(a, b);
            let clipped = env.step(&s, &spec.action_high, 0).unwrap();
            assert_eq!(a.next_state, clipped.next_state);
        }
    }

    #[test]
    fn horizon_ends_episode() {
        let env = Env::by_name("point_mass").unwrap();
        let h = env.spec().horizon;
        assert!(!env.step(&[0.0; 4], &[0.0; 2], h - 2).unwrap().done);
        assert!(env.step(&[0.0; 4], &[0.0; 2], h - 1).unwrap().done);
    }

    #[test]
    fn non_finite_state_is_a_fault() {
        let env = Env::by_name("pendulum").unwrap();
        let err = env.step(&[f64::NAN, 0.0, 0.0], &[0.0], 0).unwrap_err();
        assert!(matches!(err, Error::EnvFault(_)));
    }
}
