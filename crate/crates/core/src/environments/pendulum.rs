use std::f64::consts::PI;

use rand::Rng;

use super::EnvSpec;

/// Torque-limited pendulum swing-up. State `[cos th, sin th, th_dot]` with
/// `th = 0` upright; episodes terminate when `|th_dot|` exceeds `max_speed`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pendulum {
    spec: EnvSpec,
    pub dt: f64,
    pub gravity: f64,
    pub mass: f64,
    pub length: f64,
    pub max_speed: f64,
}

impl Default for Pendulum {
    fn default() -> Self {
        Self::new()
    }
}

fn angle_normalize(th: f64) -> f64 {
    (th + PI).rem_euclid(2.0 * PI) - PI
}

impl Pendulum {
    pub fn new() -> Self {
        Self {
            spec: EnvSpec {
                name: "pendulum".into(),
                state_dim: 3,
                action_dim: 1,
                action_low: vec![-2.0],
                action_high: vec![2.0],
                horizon: 200,
            },
            dt: 0.05,
            gravity: 10.0,
            mass: 1.0,
            length: 1.0,
            max_speed: 8.0,
        }
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    /// `th ~ U[-pi, pi]`, `th_dot ~ U[-1, 1]`.
    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let th: f64 = rng.random_range(-PI..PI);
        let th_dot: f64 = rng.random_range(-1.0..1.0);
        vec![th.cos(), th.sin(), th_dot]
    }

    pub fn initial_mean(&self) -> Vec<f64> {
        vec![0.0, 0.0, 0.0]
    }

    pub fn transition(&self, s: &[f64], a: &[f64]) -> Vec<f64> {
        let th = s[1].atan2(s[0]);
        let (g, m, l) = (self.gravity, self.mass, self.length);
        let th_dot =
            s[2] + (3.0 * g / (2.0 * l) * th.sin() + 3.0 / (m * l * l) * a[0]) * self.dt;
        let th = th + th_dot * self.dt;
        vec![th.cos(), th.sin(), th_dot]
    }

    pub fn reward(&self, s: &[f64], a: &[f64], _next: &[f64]) -> f64 {
        let th = angle_normalize(s[1].atan2(s[0]));
        -(th * th + 0.1 * s[2] * s[2] + 0.001 * a[0] * a[0])
    }

    pub fn is_terminal(&self, s: &[f64]) -> bool {
        s[2].abs() > self.max_speed
    }
}
