use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{GaussianPolicy, Transition};
use crate::environments::Env;
use crate::error::{Error, Result};
use crate::uncertainty::LabelerEnsemble;

/// Standard deviation of the constant exploration noise in unit action space.
pub const CONST_NOISE_STD: f64 = 0.01;
const MAX_FAULTY_EPISODES: usize = 1000;

/// Behaviour used while deployed.
#[derive(Debug, Clone, Copy)]
pub enum CollectPolicy<'a> {
    /// Uniform actions within the bounds.
    Random,
    /// `tanh(mu(s))` plus constant noise plus optional uncertainty-scaled noise.
    Gaussian(&'a GaussianPolicy),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollectOptions {
    pub const_noise_std: f64,
    /// Scale the second noise term by the labeler's `zeta`.
    pub use_zeta: bool,
}

impl Default for CollectOptions {
    fn default() -> Self {
        Self {
            const_noise_std: CONST_NOISE_STD,
            use_zeta: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollectReport {
    pub transitions: Vec<Transition>,
    /// Returns of episodes that ran to `done` within the batch.
    pub episode_returns: Vec<f64>,
    /// Mean `zeta` used as the uncertainty-noise standard deviation.
    pub mean_zeta: f64,
    pub episodes: usize,
    pub faults: Vec<String>,
}

/// Runs the environment until exactly `batch_size` transitions are gathered.
/// `zeta` at step `t` comes from the transition observed at step `t - 1`
/// (0 at the start of an episode). An environment fault ends the episode,
/// keeps its transitions and is recorded in the report.
pub fn collect_batch<R: Rng + ?Sized>(
    env: &Env,
    policy: CollectPolicy<'_>,
    labeler: Option<&LabelerEnsemble>,
    batch_size: usize,
    opts: &CollectOptions,
    rng: &mut R,
) -> Result<CollectReport> {
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    let spec = env.spec();
    let labeler = labeler.filter(|l| opts.use_zeta && l.is_fitted());
    let mut report = CollectReport {
        transitions: Vec::with_capacity(batch_size),
        episode_returns: Vec::new(),
        mean_zeta: 0.0,
        episodes: 0,
        faults: Vec::new(),
    };
    let mut zeta_sum = 0.0;
    let mut steps = 0usize;
    while report.transitions.len() < batch_size {
        if report.faults.len() >= MAX_FAULTY_EPISODES {
            return Err(Error::EnvFault(format!(
                "{} consecutive faulty episodes: {}",
                report.faults.len(),
                report.faults.last().map(String::as_str).unwrap_or("")
            )));
        }
        report.episodes += 1;
        let mut state = env.reset(rng);
        let mut zeta = 0.0;
        let mut ret = 0.0;
        let mut t = 0;
        loop {
            let action = match policy {
                CollectPolicy::Random => spec
                    .action_low
                    .iter()
                    .zip(&spec.action_high)
                    .map(|(lo, hi)| rng.random_range(*lo..=*hi))
                    .collect::<Vec<f64>>(),
                CollectPolicy::Gaussian(pi) => {
                    let mean = pi.unit_mean(&state)?;
                    let unit: Vec<f64> = mean
                        .iter()
                        .map(|m| {
                            let c: f64 = StandardNormal.sample(rng);
                            let z: f64 = StandardNormal.sample(rng);
                            m + opts.const_noise_std * c + zeta * z
                        })
                        .collect();
                    spec.clip_action(&pi.from_unit(&unit))
                }
            };
            zeta_sum += zeta;
            steps += 1;
            let outcome = match env.step(&state, &action, t) {
                Ok(o) => o,
                Err(e) => {
                    log::warn!("episode {} aborted at step {t}: {e}", report.episodes);
                    report.faults.push(e.to_string());
                    break;
                }
            };
            if let Some(l) = labeler {
                zeta = l.zeta(&state, &action, &outcome.next_state)?;
            }
            ret += outcome.reward;
            report.transitions.push(Transition {
                state: state.clone(),
                action,
                reward: outcome.reward,
                next_state: outcome.next_state.clone(),
                done: outcome.done,
            });
            if report.transitions.len() == batch_size {
                if outcome.done {
                    report.episode_returns.push(ret);
                }
                break;
            }
            if outcome.done {
                report.episode_returns.push(ret);
                break;
            }
            state = outcome.next_state;
            t += 1;
        }
    }
    report.mean_zeta = zeta_sum / steps.max(1) as f64;
    Ok(report)
}

/// Cosine-distance novelty of a batch against earlier data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Novelty {
    /// Mean over current states of the distance to the closest earlier state.
    pub min_pairing: f64,
    /// Mean over all (current, earlier) pairs.
    pub mean_pairing: f64,
    /// Pairs involving a zero-norm state, scored as distance 1.
    pub zero_norm_pairs: usize,
}

/// `None` for a zero-norm vector paired with a different one; a state always
/// matches itself exactly, the zero state included.
fn cosine_distance(a: &[f64], na: f64, b: &[f64], nb: f64) -> Option<f64> {
    if a == b {
        return Some(0.0);
    }
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Some((1.0 - dot / (na * nb)).clamp(0.0, 2.0))
}

pub fn novelty(current: &[&[f64]], previous: &[&[f64]]) -> Result<Novelty> {
    if current.is_empty() || previous.is_empty() {
        return Err(Error::InsufficientData {
            needed: 1,
            got: 0,
        });
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let prev_norms: Vec<f64> = previous.iter().map(|p| norm(p)).collect();
    let mut min_total = 0.0;
    let mut mean_total = 0.0;
    let mut zero_norm_pairs = 0;
    for s in current {
        let ns = norm(s);
        let mut best = f64::INFINITY;
        let mut sum = 0.0;
        for (p, &np) in previous.iter().zip(&prev_norms) {
            let d = match cosine_distance(s, ns, p, np) {
                Some(d) => d,
                None => {
                    zero_norm_pairs += 1;
                    1.0
                }
            };
            best = best.min(d);
            sum += d;
        }
        min_total += best;
        mean_total += sum / previous.len() as f64;
    }
    let n = current.len() as f64;
    Ok(Novelty {
        min_pairing: min_total / n,
        mean_pairing: mean_total / n,
        zero_norm_pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::FitConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn batch_has_exact_size_and_bounded_actions() {
        let env = Env::by_name("pendulum").unwrap();
        for n in [1, 10, 450] {
            let rep = collect_batch(&env, CollectPolicy::Random, None, n, &CollectOptions::default(), &mut rng(0)).unwrap();
            assert_eq!(rep.transitions.len(), n);
            assert!(rep.transitions.iter().all(|t| env.spec().action_in_bounds(&t.action)));
        }
    }

    #[test]
    fn zero_batch_is_rejected() {
        let env = Env::by_name("point_mass").unwrap();
        assert!(collect_batch(&env, CollectPolicy::Random, None, 0, &CollectOptions::default(), &mut rng(0)).is_err());
    }

    #[test]
    fn first_deployment_is_reproducible() {
        let env = Env::by_name("pendulum").unwrap();
        let a = collect_batch(&env, CollectPolicy::Random, None, 300, &CollectOptions::default(), &mut rng(5)).unwrap();
        let b = collect_batch(&env, CollectPolicy::Random, None, 300, &CollectOptions::default(), &mut rng(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unfitted_labeler_gives_no_uncertainty_noise() {
        let env = Env::by_name("point_mass").unwrap();
        let mut r = rng(2);
        let pi = GaussianPolicy::new(env.spec(), &[8], -1.0, &mut r).unwrap();
        let l = LabelerEnsemble::new(4, 2, &[8], 3, 0.028, &mut r).unwrap();
        let rep = collect_batch(&env, CollectPolicy::Gaussian(&pi), Some(&l), 120, &CollectOptions::default(), &mut r).unwrap();
        assert_eq!(rep.mean_zeta, 0.0);
        // only the constant noise remains around tanh(mu)
        for t in &rep.transitions {
            let m = pi.mean_action(&t.state).unwrap();
            for k in 0..2 {
                assert!((t.action[k] - m[k]).abs() < 0.08);
            }
        }
    }

    #[test]
    fn uncertainty_noise_is_larger_away_from_training_data() {
        // 1-D system s' = s + a + 0.5 sin(3 s), labeler trained on s < 0
        let mut r = rng(3);
        let truth = |s: f64, a: f64| s + a + 0.5 * (3.0 * s).sin();
        let data: Vec<Transition> = (0..600)
            .map(|_| {
                let s: f64 = r.random_range(-2.0..0.0);
                let a: f64 = r.random_range(-1.0..1.0);
                Transition { state: vec![s], action: vec![a], reward: 0.0, next_state: vec![truth(s, a)], done: false }
            })
            .collect();
        let mut l = LabelerEnsemble::new(1, 1, &[32, 32], 3, 0.028, &mut r).unwrap();
        let cfg = FitConfig { max_epochs: 150, patience: 10, batch_size: 32, ..FitConfig::default() };
        l.fit(&data, &cfg, &mut r).unwrap();
        let mean_zeta = |lo: f64, hi: f64, r: &mut ChaCha8Rng| {
            let mut total = 0.0;
            for _ in 0..300 {
                let s: f64 = r.random_range(lo..hi);
                let a: f64 = r.random_range(-1.0..1.0);
                total += l.zeta(&[s], &[a], &[truth(s, a)]).unwrap();
            }
            total / 300.0
        };
        let inside = mean_zeta(-2.0, 0.0, &mut r);
        let outside = mean_zeta(0.0, 2.0, &mut r);
        assert!(outside > inside, "inside {inside} outside {outside}");
    }

    fn refs(v: &[Vec<f64>]) -> Vec<&[f64]> {
        v.iter().map(Vec::as_slice).collect()
    }

    #[test]
    fn novelty_examples() {
        let cur = vec![vec![1.0, 0.0]];
        let prev = vec![vec![0.0, 1.0]];
        assert_eq!(novelty(&refs(&cur), &refs(&prev)).unwrap().min_pairing, 1.0);
        let b = vec![vec![1.0, 2.0], vec![-0.3, 0.4], vec![2.0, 2.0]];
        let mut all = b.clone();
        all.push(vec![5.0, -1.0]);
        assert_eq!(novelty(&refs(&b), &refs(&b)).unwrap().min_pairing, 0.0);
        assert_eq!(novelty(&refs(&b[..2]), &refs(&all)).unwrap().min_pairing, 0.0);
        assert!(novelty(&[], &refs(&b)).is_err());
    }

    #[test]
    fn zero_norm_pairs_count_as_distance_one() {
        let cur = vec![vec![0.0, 0.0]];
        let prev = vec![vec![1.0, 1.0], vec![0.0, 2.0]];
        let n = novelty(&refs(&cur), &refs(&prev)).unwrap();
        assert_eq!(n.min_pairing, 1.0);
        assert_eq!(n.zero_norm_pairs, 2);
    }

    #[test]
    fn zero_state_matches_itself() {
        let b = vec![vec![0.0, 0.0], vec![0.5, -0.1], vec![0.0, 0.0]];
        let n = novelty(&refs(&b), &refs(&b)).unwrap();
        assert_eq!(n.min_pairing, 0.0);
        assert_eq!(n.zero_norm_pairs, 4);
    }

    proptest::proptest! {
        #[test]
        fn batch_has_zero_novelty_against_itself(
            b in proptest::collection::vec(proptest::collection::vec(-2.0f64..2.0, 3), 1..30),
            zeros in 0usize..3,
        ) {
            let mut b = b;
            b.extend(std::iter::repeat_n(vec![0.0; 3], zeros));
            proptest::prop_assert_eq!(novelty(&refs(&b), &refs(&b)).unwrap().min_pairing, 0.0);
        }
    }

    #[test]
    fn novelty_matches_brute_force() {
        let mut r = rng(4);
        let mk = |n: usize, r: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
            (0..n).map(|_| (0..3).map(|_| r.random_range(-1.0..1.0)).collect()).collect()
        };
        let cur = mk(20, &mut r);
        let prev = mk(35, &mut r);
        let mut want_min = 0.0;
        let mut want_mean = 0.0;
        for c in &cur {
            let mut best = f64::MAX;
            let mut sum = 0.0;
            for p in &prev {
                let dot = c[0] * p[0] + c[1] * p[1] + c[2] * p[2];
                let nc = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
                let np = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
                let d = 1.0 - dot / (nc * np);
                best = best.min(d);
                sum += d;
            }
            want_min += best / 20.0;
            want_mean += sum / 35.0 / 20.0;
        }
        let got = novelty(&refs(&cur), &refs(&prev)).unwrap();
        assert!((got.min_pairing - want_min).abs() < 1e-12);
        assert!((got.mean_pairing - want_mean).abs() < 1e-12);
    }
}
