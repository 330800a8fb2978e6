use rand::Rng;

use super::EnvSpec;

/// Damped 2-D point mass pushed by a bounded force.
///
/// State `[x, y, vx, vy]`, action `[fx, fy]` in `[-1, 1]^2`. The reward is the
/// velocity component toward a distant goal minus `0.1 |a|^2`, a running task
/// in the style of forward-velocity locomotion rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMass {
    spec: EnvSpec,
    pub dt: f64,
    pub damping: f64,
    pub goal: [f64; 2],
}

impl Default for PointMass {
    fn default() -> Self {
        Self::new()
    }
}

impl PointMass {
    pub fn new() -> Self {
        Self {
            spec: EnvSpec {
                name: "point_mass".into(),
                state_dim: 4,
                action_dim: 2,
                action_low: vec![-1.0, -1.0],
                action_high: vec![1.0, 1.0],
                horizon: 100,
            },
            dt: 0.1,
            damping: 0.5,
            goal: [25.0, 25.0],
        }
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn reset<R: Rng + ?Sized>(&self, _rng: &mut R) -> Vec<f64> {
        vec![0.0; 4]
    }

    pub fn initial_mean(&self) -> Vec<f64> {
        vec![0.0; 4]
    }

    pub fn transition(&self, s: &[f64], a: &[f64]) -> Vec<f64> {
        let vx = s[2] + self.dt * (a[0] - self.damping * s[2]);
        let vy = s[3] + self.dt * (a[1] - self.damping * s[3]);
        vec![s[0] + self.dt * vx, s[1] + self.dt * vy, vx, vy]
    }

    pub fn reward(&self, s: &[f64], a: &[f64], next: &[f64]) -> f64 {
        let dx = self.goal[0] - s[0];
        let dy = self.goal[1] - s[1];
        let dist = (dx * dx + dy * dy).sqrt();
        let toward = if dist > 1e-9 {
            (next[2] * dx + next[3] * dy) / dist
        } else {
            0.0
        };
        toward - 0.1 * a.iter().map(|v| v * v).sum::<f64>()
    }
}
