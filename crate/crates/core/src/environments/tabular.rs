use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ROW_SUM_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 1_000_000;

/// Finite MDP with states embedded on the unit circle,
/// state `i -> (cos(2 pi i / n), sin(2 pi i / n))`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    // transition[(s * n_actions + a) * n_states + s']
    transition: Vec<f64>,
    // reward[s * n_actions + a]
    reward: Vec<f64>,
    gamma: f64,
    initial: Vec<f64>,
    embedding: Vec<[f64; 2]>,
}

/// JSON document form: `{n_states, n_actions, P, R, gamma, mu0}` with
/// `P[s][a][s']` and `R[s][a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabularMdpDoc {
    pub n_states: usize,
    pub n_actions: usize,
    #[serde(rename = "P")]
    pub p: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "R")]
    pub r: Vec<Vec<f64>>,
    pub gamma: f64,
    pub mu0: Vec<f64>,
}

fn check_distribution(what: &str, row: &[f64]) -> Result<()> {
    if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::Config(format!("{what} has a negative or non-finite entry")));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(Error::Config(format!("{what} sums to {sum}, not 1")));
    }
    Ok(())
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        gamma: f64,
        initial: Vec<f64>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::Config("tabular MDP needs at least one state and action".into()));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::Config(format!("gamma must lie in (0, 1), got {gamma}")));
        }
        if transition.len() != n_states * n_actions * n_states {
            return Err(Error::Config(format!(
                "transition table has {} entries, expected {}",
                transition.len(),
                n_states * n_actions * n_states
            )));
        }
        if reward.len() != n_states * n_actions {
            return Err(Error::Config(format!(
                "reward table has {} entries, expected {}",
                reward.len(),
                n_states * n_actions
            )));
        }
        if reward.iter().any(|r| !r.is_finite()) {
            return Err(Error::Config("reward table has a non-finite entry".into()));
        }
        if initial.len() != n_states {
            return Err(Error::Config(format!(
                "initial distribution has {} entries, expected {n_states}",
                initial.len()
            )));
        }
        for (k, row) in transition.chunks_exact(n_states).enumerate() {
            check_distribution(&format!("P[{}][{}]", k / n_actions, k % n_actions), row)?;
        }
        check_distribution("mu0", &initial)?;
        let embedding = (0..n_states)
            .map(|i| {
                let ang = 2.0 * PI * i as f64 / n_states as f64;
                [ang.cos(), ang.sin()]
            })
            .collect();
        Ok(Self {
            n_states,
            n_actions,
            transition,
            reward,
            gamma,
            initial,
            embedding,
        })
    }

    pub fn from_doc(doc: &TabularMdpDoc) -> Result<Self> {
        if doc.p.len() != doc.n_states || doc.r.len() != doc.n_states {
            return Err(Error::Config("P and R must have n_states rows".into()));
        }
        let mut transition = Vec::with_capacity(doc.n_states * doc.n_actions * doc.n_states);
        let mut reward = Vec::with_capacity(doc.n_states * doc.n_actions);
        for s in 0..doc.n_states {
            if doc.p[s].len() != doc.n_actions || doc.r[s].len() != doc.n_actions {
                return Err(Error::Config(format!("P[{s}] and R[{s}] must have n_actions entries")));
            }
            for a in 0..doc.n_actions {
                if doc.p[s][a].len() != doc.n_states {
                    return Err(Error::Config(format!("P[{s}][{a}] must have n_states entries")));
                }
                transition.extend_from_slice(&doc.p[s][a]);
                reward.push(doc.r[s][a]);
            }
        }
        Self::new(
            doc.n_states,
            doc.n_actions,
            transition,
            reward,
            doc.gamma,
            doc.mu0.clone(),
        )
    }

    pub fn to_doc(&self) -> TabularMdpDoc {
        TabularMdpDoc {
            n_states: self.n_states,
            n_actions: self.n_actions,
            p: (0..self.n_states)
                .map(|s| (0..self.n_actions).map(|a| self.row(s, a).to_vec()).collect())
                .collect(),
            r: (0..self.n_states)
                .map(|s| (0..self.n_actions).map(|a| self.reward(s, a)).collect())
                .collect(),
            gamma: self.gamma,
            mu0: self.initial.clone(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: TabularMdpDoc =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("tabular MDP: {e}")))?;
        Self::from_doc(&doc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Random MDP: dense transition rows with uniform weights, rewards drawn
    /// from `reward_range`, uniform start distribution.
    pub fn random<R: Rng + ?Sized>(
        n_states: usize,
        n_actions: usize,
        gamma: f64,
        reward_range: (f64, f64),
        rng: &mut R,
    ) -> Result<Self> {
        let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
        for _ in 0..n_states * n_actions {
            transition.extend(random_distribution(n_states, rng));
        }
        let reward = (0..n_states * n_actions)
            .map(|_| rng.random_range(reward_range.0..=reward_range.1))
            .collect();
        let initial = vec![1.0 / n_states as f64; n_states];
        Self::new(n_states, n_actions, transition, reward, gamma, initial)
    }

    /// Copy whose transition rows are mixed toward fresh random rows:
    /// `P' = (1 - strength) P + strength Q`.
    pub fn perturbed<R: Rng + ?Sized>(&self, strength: f64, rng: &mut R) -> Result<Self> {
        let mut transition = self.transition.clone();
        for row in transition.chunks_exact_mut(self.n_states) {
            let q = random_distribution(self.n_states, rng);
            for (p, q) in row.iter_mut().zip(q) {
                *p = (1.0 - strength) * *p + strength * q;
            }
            renormalize(row);
        }
        Self::new(
            self.n_states,
            self.n_actions,
            transition,
            self.reward.clone(),
            self.gamma,
            self.initial.clone(),
        )
    }

    /// Same MDP with a replaced transition row for `(s, a)`.
    pub fn with_row(&self, s: usize, a: usize, row: &[f64]) -> Result<Self> {
        let mut transition = self.transition.clone();
        let k = (s * self.n_actions + a) * self.n_states;
        transition[k..k + self.n_states].copy_from_slice(row);
        Self::new(
            self.n_states,
            self.n_actions,
            transition,
            self.reward.clone(),
            self.gamma,
            self.initial.clone(),
        )
    }

    /// Same dynamics with different rewards.
    pub fn with_rewards(&self, reward: Vec<f64>) -> Result<Self> {
        Self::new(
            self.n_states,
            self.n_actions,
            self.transition.clone(),
            reward,
            self.gamma,
            self.initial.clone(),
        )
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let k = (s * self.n_actions + a) * self.n_states;
        &self.transition[k..k + self.n_states]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    pub fn embedding(&self, s: usize) -> [f64; 2] {
        self.embedding[s]
    }

    pub fn embedding_distance(&self, s: usize, t: usize) -> f64 {
        let (a, b) = (self.embedding[s], self.embedding[t]);
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
    }

    /// Expected embedded next state `sum_s' P(s'|s,a) embed(s')`.
    pub fn expected_next_embedding(&self, s: usize, a: usize) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (p, e) in self.row(s, a).iter().zip(&self.embedding) {
            out[0] += p * e[0];
            out[1] += p * e[1];
        }
        out
    }

    pub fn same_spaces(&self, other: &TabularMdp) -> bool {
        self.n_states == other.n_states && self.n_actions == other.n_actions
    }
}

fn random_distribution<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n).map(|_| rng.random_range(1e-3..1.0)).collect();
    renormalize(&mut w);
    w
}

fn renormalize(row: &mut [f64]) {
    let sum: f64 = row.iter().sum();
    row.iter_mut().for_each(|p| *p /= sum);
}

/// Stochastic policy table `pi(a | s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl TabularPolicy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_states * n_actions {
            return Err(Error::Config(format!(
                "policy table has {} entries, expected {}",
                probs.len(),
                n_states * n_actions
            )));
        }
        for (s, row) in probs.chunks_exact(n_actions).enumerate() {
            check_distribution(&format!("pi(.|{s})"), row)?;
        }
        Ok(Self {
            n_states,
            n_actions,
            probs,
        })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    pub fn random<R: Rng + ?Sized>(n_states: usize, n_actions: usize, rng: &mut R) -> Self {
        let probs = (0..n_states)
            .flat_map(|_| random_distribution(n_actions, rng))
            .collect();
        Self {
            n_states,
            n_actions,
            probs,
        }
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn check_against(&self, mdp: &TabularMdp) -> Result<()> {
        if self.n_states != mdp.n_states || self.n_actions != mdp.n_actions {
            return Err(Error::Config(format!(
                "policy is {}x{} but the MDP has {} states and {} actions",
                self.n_states, self.n_actions, mdp.n_states, mdp.n_actions
            )));
        }
        Ok(())
    }
}

fn policy_reward(mdp: &TabularMdp, policy: &TabularPolicy) -> Vec<f64> {
    (0..mdp.n_states)
        .map(|s| (0..mdp.n_actions).map(|a| policy.prob(s, a) * mdp.reward(s, a)).sum())
        .collect()
}

fn policy_transition(mdp: &TabularMdp, policy: &TabularPolicy) -> Vec<f64> {
    let n = mdp.n_states;
    let mut p = vec![0.0; n * n];
    for s in 0..n {
        for a in 0..mdp.n_actions {
            let w = policy.prob(s, a);
            for (dst, &q) in p[s * n..(s + 1) * n].iter_mut().zip(mdp.row(s, a)) {
                *dst += w * q;
            }
        }
    }
    p
}

/// State values `V = R_pi + gamma P_pi V`, iterated until the Bellman residual
/// is below `1e-10 (1 - gamma)`, which bounds the value error by `1e-10`.
pub fn exact_value(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<Vec<f64>> {
    policy.check_against(mdp)?;
    let n = mdp.n_states;
    let r = policy_reward(mdp, policy);
    let p = policy_transition(mdp, policy);
    let tol = 1e-10 * (1.0 - mdp.gamma);
    let mut v = vec![0.0; n];
    let mut next = vec![0.0; n];
    for _ in 0..MAX_SWEEPS {
        let mut residual = 0.0f64;
        for s in 0..n {
            let ev: f64 = p[s * n..(s + 1) * n].iter().zip(&v).map(|(q, v)| q * v).sum();
            next[s] = r[s] + mdp.gamma * ev;
            residual = residual.max((next[s] - v[s]).abs());
        }
        std::mem::swap(&mut v, &mut next);
        if residual < tol {
            return Ok(v);
        }
    }
    Err(Error::Numeric(format!(
        "value iteration did not converge within {MAX_SWEEPS} sweeps"
    )))
}

/// Discounted state-action occupancy
/// `rho(s, a) = (1 - gamma) sum_t gamma^t Pr(S_t = s) pi(a | s)`,
/// flattened as `rho[s * n_actions + a]`.
pub fn exact_occupancy(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<Vec<f64>> {
    policy.check_against(mdp)?;
    let n = mdp.n_states;
    let p = policy_transition(mdp, policy);
    let g = mdp.gamma;
    let tol = 1e-12 * (1.0 - g);
    // d = (1 - g) mu0 + g P_pi^T d
    let mut d: Vec<f64> = mdp.initial.iter().map(|m| (1.0 - g) * m).collect();
    let mut next = vec![0.0; n];
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        next.iter_mut()
            .zip(&mdp.initial)
            .for_each(|(x, m)| *x = (1.0 - g) * m);
        for s in 0..n {
            let w = g * d[s];
            for (x, q) in next.iter_mut().zip(&p[s * n..(s + 1) * n]) {
                *x += w * q;
            }
        }
        let residual = d
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut d, &mut next);
        if residual < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numeric("occupancy iteration did not converge".into()));
    }
    let mut rho = Vec::with_capacity(n * mdp.n_actions);
    for s in 0..n {
        for a in 0..mdp.n_actions {
            rho.push(d[s] * policy.prob(s, a));
        }
    }
    Ok(rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn rejects_bad_rows_and_gamma() {
        assert!(TabularMdp::new(1, 1, vec![0.5], vec![0.0], 0.9, vec![1.0]).is_err());
        assert!(TabularMdp::new(1, 1, vec![1.0], vec![0.0], 1.0, vec![1.0]).is_err());
        assert!(TabularMdp::new(1, 1, vec![1.0], vec![0.0], 0.9, vec![1.0]).is_ok());
    }

    #[test]
    fn zero_reward_gives_zero_value() {
        let mdp = TabularMdp::random(5, 2, 0.9, (0.0, 0.0), &mut rng(1)).unwrap();
        let v = exact_value(&mdp, &TabularPolicy::uniform(5, 2)).unwrap();
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_state_geometric_series() {
        let mdp = TabularMdp::new(1, 1, vec![1.0], vec![1.0], 0.9, vec![1.0]).unwrap();
        let v = exact_value(&mdp, &TabularPolicy::uniform(1, 1)).unwrap();
        assert!((v[0] - 10.0).abs() < 1e-9);
    }

    #[test]
    fn value_matches_linear_solve() {
        let mut r = rng(2);
        for _ in 0..10 {
            let mdp = TabularMdp::random(5, 3, 0.95, (-1.0, 2.0), &mut r).unwrap();
            let pi = TabularPolicy::random(5, 3, &mut r);
            let v = exact_value(&mdp, &pi).unwrap();
            // (I - gamma P_pi) V = R_pi, assembled independently
            let mut a = DMatrix::<f64>::identity(5, 5);
            let mut b = DVector::<f64>::zeros(5);
            for s in 0..5 {
                for act in 0..3 {
                    let w = pi.prob(s, act);
                    b[s] += w * mdp.reward(s, act);
                    for t in 0..5 {
                        a[(s, t)] -= 0.95 * w * mdp.row(s, act)[t];
                    }
                }
            }
            let want = a.lu().solve(&b).unwrap();
            for s in 0..5 {
                assert!((v[s] - want[s]).abs() < 1e-9, "{} vs {}", v[s], want[s]);
            }
        }
    }

    /// `(1 - gamma) sum_{t < T} gamma^t mu_t`, propagated step by step.
    fn truncated_occupancy(mdp: &TabularMdp, pi: &TabularPolicy, steps: usize) -> Vec<f64> {
        let (n, m, g) = (mdp.n_states(), mdp.n_actions(), mdp.gamma());
        let mut dist = mdp.initial().to_vec();
        let mut rho = vec![0.0; n * m];
        let mut disc = 1.0 - g;
        for _ in 0..steps {
            let mut next = vec![0.0; n];
            for s in 0..n {
                for a in 0..m {
                    let mass = dist[s] * pi.prob(s, a);
                    rho[s * m + a] += disc * mass;
                    for t in 0..n {
                        next[t] += mass * mdp.row(s, a)[t];
                    }
                }
            }
            dist = next;
            disc *= g;
        }
        rho
    }

    #[test]
    fn occupancy_matches_truncated_series() {
        let mut r = rng(3);
        for n in [2usize, 5, 12, 20] {
            let mdp = TabularMdp::random(n, 2, 0.9, (0.0, 1.0), &mut r).unwrap();
            let pi = TabularPolicy::random(n, 2, &mut r);
            let rho = exact_occupancy(&mdp, &pi).unwrap();
            let want = truncated_occupancy(&mdp, &pi, 600);
            assert!((rho.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            for (x, y) in rho.iter().zip(&want) {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn small_gamma_occupancy_is_initial_times_policy() {
        let mut r = rng(4);
        let mdp = TabularMdp::random(6, 2, 0.01, (0.0, 1.0), &mut r).unwrap();
        let pi = TabularPolicy::random(6, 2, &mut r);
        let rho = exact_occupancy(&mdp, &pi).unwrap();
        let tv: f64 = (0..6)
            .flat_map(|s| (0..2).map(move |a| (s, a)))
            .map(|(s, a)| (rho[s * 2 + a] - mdp.initial()[s] * pi.prob(s, a)).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.02);
    }

    #[test]
    fn absorbing_state_collects_all_mass() {
        // Both states jump to state 1, which is absorbing; start in state 1.
        let mdp =
            TabularMdp::new(2, 1, vec![0.0, 1.0, 0.0, 1.0], vec![0.0, 0.0], 0.9, vec![0.0, 1.0])
                .unwrap();
        let rho = exact_occupancy(&mdp, &TabularPolicy::uniform(2, 1)).unwrap();
        assert!((rho[1] - 1.0).abs() < 1e-12);
        assert!(rho[0].abs() < 1e-12);
    }

    #[test]
    fn json_roundtrip() {
        let mdp = TabularMdp::random(3, 2, 0.8, (0.0, 1.0), &mut rng(5)).unwrap();
        let text = serde_json::to_string(&mdp.to_doc()).unwrap();
        assert!(text.contains("\"P\"") && text.contains("\"mu0\""));
        assert_eq!(TabularMdp::from_json(&text).unwrap(), mdp);
        assert!(TabularMdp::from_json("{\"n_states\": 1}").is_err());
    }
}
