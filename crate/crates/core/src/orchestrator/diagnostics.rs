use rand::Rng;

use crate::dynamics_model::DynamicsEnsemble;
use crate::environments::Env;
use crate::error::{check_dim, Error, Result};
use crate::explorer::GaussianPolicy;

/// A bank of next-state predictors indexed by member.
pub trait NextStateModel {
    fn members(&self) -> usize;
    fn predict(&self, member: usize, state: &[f64], action: &[f64]) -> Result<Vec<f64>>;
}

impl NextStateModel for DynamicsEnsemble {
    fn members(&self) -> usize {
        self.len()
    }

    fn predict(&self, member: usize, state: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        DynamicsEnsemble::predict(self, member, state, action)
    }
}

/// The environment's own transition function as a one-member model.
pub struct TrueDynamics<'a>(pub &'a Env);

impl NextStateModel for TrueDynamics<'_> {
    fn members(&self) -> usize {
        1
    }

    fn predict(&self, _member: usize, state: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        Ok(self.0.transition(state, &self.0.spec().clip_action(action)))
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn mean_pairwise(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for x in a {
        for y in b {
            total += euclid(x, y);
        }
    }
    total / (a.len() * b.len()) as f64
}

/// `2 E|X - Y| - E|X - X'| - E|Y - Y'|` by exact double sums.
pub fn energy_distance(real: &[Vec<f64>], fict: &[Vec<f64>]) -> Result<f64> {
    if real.is_empty() || fict.is_empty() {
        return Err(Error::InsufficientData {
            needed: 1,
            got: 0,
        });
    }
    let d = 2.0 * mean_pairwise(real, fict) - mean_pairwise(real, real) - mean_pairwise(fict, fict);
    // exact cancellation is only up to rounding
    Ok(d.max(0.0))
}

/// Matched real and model trajectories from the same start states and action
/// sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayPairs {
    /// States after each step, pooled over pairs.
    pub real_states: Vec<Vec<f64>>,
    pub model_states: Vec<Vec<f64>>,
    /// Mean over steps and pairs of the per-dimension squared state error.
    pub mse: f64,
}

/// Runs the policy in the real environment from `n_pairs` resets, replays
/// the same actions through one uniformly drawn model member from the same
/// start, and compares the visited states. A pair stops when the real
/// episode ends or after `horizon` steps.
pub fn replay_pairs<M: NextStateModel, R: Rng + ?Sized>(
    env: &Env,
    model: &M,
    policy: &GaussianPolicy,
    horizon: usize,
    n_pairs: usize,
    rng: &mut R,
) -> Result<ReplayPairs> {
    let d = env.spec().state_dim;
    check_dim("replay policy state", d, policy.state_dim())?;
    let mut out = ReplayPairs {
        real_states: Vec::new(),
        model_states: Vec::new(),
        mse: 0.0,
    };
    let mut total = 0.0;
    let mut count = 0usize;
    for _ in 0..n_pairs {
        let start = env.reset(rng);
        let member = rng.random_range(0..model.members());
        let (mut real, mut fict) = (start.clone(), start);
        for t in 0..horizon {
            let draw = policy.sample(&real, rng)?;
            let action = env.spec().clip_action(&draw.action);
            let outcome = env.step(&real, &action, t)?;
            let predicted = model.predict(member, &fict, &action)?;
            let err: f64 = outcome
                .next_state
                .iter()
                .zip(&predicted)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / d as f64;
            total += err;
            count += 1;
            out.real_states.push(outcome.next_state.clone());
            out.model_states.push(predicted.clone());
            real = outcome.next_state;
            fict = predicted;
            if outcome.done {
                break;
            }
        }
    }
    out.mse = if count > 0 { total / count as f64 } else { 0.0 };
    Ok(out)
}

/// Mean squared state error between real and model trajectories under the
/// same actions.
pub fn trajectory_mse<M: NextStateModel, R: Rng + ?Sized>(
    env: &Env,
    model: &M,
    policy: &GaussianPolicy,
    horizon: usize,
    n_pairs: usize,
    rng: &mut R,
) -> Result<f64> {
    Ok(replay_pairs(env, model, policy, horizon, n_pairs, rng)?.mse)
}

/// Undiscounted returns of the deterministic policy `tanh(mu(s))`.
pub fn evaluate<R: Rng + ?Sized>(
    env: &Env,
    policy: &GaussianPolicy,
    episodes: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut state = env.reset(rng);
        let mut ret = 0.0;
        for t in 0..env.spec().horizon {
            let outcome = env.step(&state, &policy.mean_action(&state)?, t)?;
            ret += outcome.reward;
            state = outcome.next_state;
            if outcome.done {
                break;
            }
        }
        returns.push(ret);
    }
    Ok(returns)
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics_model::Normalizer;
    use crate::numerics::ParamNet;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn energy_distance_examples() {
        assert_eq!(energy_distance(&[vec![0.0]], &[vec![1.0]]).unwrap(), 2.0);
        let mut r = rng(0);
        let a: Vec<Vec<f64>> = (0..30).map(|_| vec![r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)]).collect();
        let mut b = a.clone();
        b.reverse();
        assert!(energy_distance(&a, &b).unwrap() < 1e-12);
        assert!(energy_distance(&a, &[]).is_err());
    }

    #[test]
    fn energy_distance_matches_brute_force() {
        let mut r = rng(1);
        let x: Vec<Vec<f64>> = (0..17).map(|_| (0..3).map(|_| r.random_range(-2.0..2.0)).collect()).collect();
        let y: Vec<Vec<f64>> = (0..11).map(|_| (0..3).map(|_| r.random_range(-1.0..3.0)).collect()).collect();
        let dist = |a: &Vec<f64>, b: &Vec<f64>| {
            ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
        };
        let (mut xy, mut xx, mut yy) = (0.0, 0.0, 0.0);
        for a in &x {
            for b in &y {
                xy += dist(a, b);
            }
            for b in &x {
                xx += dist(a, b);
            }
        }
        for a in &y {
            for b in &y {
                yy += dist(a, b);
            }
        }
        let want = 2.0 * xy / (17.0 * 11.0) - xx / (17.0 * 17.0) - yy / (11.0 * 11.0);
        assert!((energy_distance(&x, &y).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn true_dynamics_have_zero_trajectory_error() {
        for name in ["point_mass", "pendulum"] {
            let env = Env::by_name(name).unwrap();
            let mut r = rng(2);
            let pi = GaussianPolicy::new(env.spec(), &[8], -0.5, &mut r).unwrap();
            let pairs = replay_pairs(&env, &TrueDynamics(&env), &pi, 50, 4, &mut r).unwrap();
            assert_eq!(pairs.mse, 0.0);
            assert!(energy_distance(&pairs.real_states, &pairs.model_states).unwrap() < 1e-12);
        }
    }

    struct Offset(f64);

    impl NextStateModel for Offset {
        fn members(&self) -> usize {
            1
        }
        fn predict(&self, _: usize, s: &[f64], _: &[f64]) -> Result<Vec<f64>> {
            Ok(s.iter().map(|v| v + self.0).collect())
        }
    }

    #[test]
    fn horizon_one_is_one_step_error() {
        let env = Env::by_name("pendulum").unwrap();
        let mut r = rng(3);
        let pi = GaussianPolicy::new(env.spec(), &[8], -0.5, &mut r).unwrap();
        let model = Offset(0.2);
        let got = trajectory_mse(&env, &model, &pi, 1, 6, &mut rng(4)).unwrap();
        // recompute with the same draws
        let mut r = rng(4);
        let mut want = 0.0;
        for _ in 0..6 {
            let s = env.reset(&mut r);
            let _member: usize = r.random_range(0..1);
            let a = env.spec().clip_action(&pi.sample(&s, &mut r).unwrap().action);
            let real = env.step(&s, &a, 0).unwrap().next_state;
            let pred = model.predict(0, &s, &a).unwrap();
            want += real.iter().zip(&pred).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / 3.0;
        }
        assert!((got - want / 6.0).abs() < 1e-12);
    }

    #[test]
    fn ensemble_is_a_model() {
        let env = Env::by_name("point_mass").unwrap();
        let zero = ParamNet::zeros(&[6, 4]).unwrap();
        let ens = DynamicsEnsemble::from_parts(vec![zero], Normalizer::identity(6, 4), 4, 2).unwrap();
        let mut r = rng(5);
        let pi = GaussianPolicy::new(env.spec(), &[8], -0.5, &mut r).unwrap();
        assert!(trajectory_mse(&env, &ens, &pi, 10, 2, &mut r).unwrap() >= 0.0);
    }

    #[test]
    fn point_mass_evaluation_is_deterministic() {
        let env = Env::by_name("point_mass").unwrap();
        let pi = GaussianPolicy::new(env.spec(), &[8], -0.5, &mut rng(6)).unwrap();
        let rets = evaluate(&env, &pi, 3, &mut rng(7)).unwrap();
        assert_eq!(rets.len(), 3);
        assert!(rets.iter().all(|r| *r == rets[0]));
    }
}
