//! Exact checks of the value-difference bound and the coefficient-weighted
//! lower bound on tabular MDPs.
//!
//! Both bounds are checked on the start-distribution value
//! `J = sum_s mu0(s) V(s)`. The per-(s, a) model gap is the Wasserstein-1
//! distance between the two next-state distributions under the embedding
//! metric, which reduces to the distance between expected embedded next
//! states whenever both kernels are deterministic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::environments::{exact_occupancy, exact_value, TabularMdp, TabularPolicy};
use crate::error::{Error, Result};

/// Absolute tolerance on every bound comparison.
pub const BOUND_TOL: f64 = 1e-9;
const MASS_EPS: f64 = 1e-15;

/// `gamma / (1 - gamma)`.
pub fn kappa(gamma: f64) -> f64 {
    gamma / (1.0 - gamma)
}

/// `(v_hat - kappa * gap) / v_hat`.
pub fn u_coefficient(v_hat: f64, model_gap: f64, kappa: f64) -> Result<f64> {
    if v_hat == 0.0 {
        return Err(Error::UndefinedCoefficient(
            "coefficient is undefined for a zero value estimate".into(),
        ));
    }
    Ok((v_hat - kappa * model_gap) / v_hat)
}

/// Smallest `L` with `|V(s) - V(t)| <= L |embed(s) - embed(t)|` over all
/// state pairs.
pub fn lipschitz_constant(mdp: &TabularMdp, values: &[f64]) -> f64 {
    let n = mdp.n_states();
    let mut best = 0.0f64;
    for s in 0..n {
        for t in s + 1..n {
            let d = mdp.embedding_distance(s, t);
            if d > 0.0 {
                best = best.max((values[s] - values[t]).abs() / d);
            }
        }
    }
    best
}

/// Exact Wasserstein-1 distance between two distributions on the same
/// finite support, by successive shortest paths on the transport network.
pub fn wasserstein1<D: Fn(usize, usize) -> f64>(p: &[f64], q: &[f64], dist: D) -> f64 {
    let n = p.len();
    assert_eq!(n, q.len(), "wasserstein1 needs equal supports");
    // the mass both distributions already share at a point stays put
    let mut supply: Vec<f64> = p.iter().zip(q).map(|(a, b)| (a - b).max(0.0)).collect();
    let mut demand: Vec<f64> = p.iter().zip(q).map(|(a, b)| (b - a).max(0.0)).collect();
    let cost: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| dist(i, j)).collect()).collect();
    let mut flow = vec![vec![0.0f64; n]; n];
    // node ids: sources 0..n, sinks n..2n
    loop {
        let remaining: f64 = supply.iter().sum();
        if remaining <= MASS_EPS || demand.iter().sum::<f64>() <= MASS_EPS {
            break;
        }
        let mut dist_to = vec![f64::INFINITY; 2 * n];
        let mut parent = vec![usize::MAX; 2 * n];
        for i in 0..n {
            if supply[i] > MASS_EPS {
                dist_to[i] = 0.0;
            }
        }
        // Bellman-Ford over forward (source -> sink) and residual (sink -> source) arcs
        for _ in 0..2 * n {
            let mut changed = false;
            for i in 0..n {
                if dist_to[i].is_finite() {
                    for j in 0..n {
                        let c = dist_to[i] + cost[i][j];
                        if c < dist_to[n + j] - 1e-15 {
                            dist_to[n + j] = c;
                            parent[n + j] = i;
                            changed = true;
                        }
                    }
                }
            }
            for j in 0..n {
                if dist_to[n + j].is_finite() {
                    for i in 0..n {
                        if flow[i][j] > MASS_EPS {
                            let c = dist_to[n + j] - cost[i][j];
                            if c < dist_to[i] - 1e-15 {
                                dist_to[i] = c;
                                parent[i] = n + j;
                                changed = true;
                            }
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let sink = (0..n)
            .filter(|&j| demand[j] > MASS_EPS && dist_to[n + j].is_finite())
            .min_by(|&a, &b| dist_to[n + a].total_cmp(&dist_to[n + b]));
        let Some(sink) = sink else { break };
        let mut path = vec![n + sink];
        while parent[*path.last().unwrap()] != usize::MAX {
            path.push(parent[*path.last().unwrap()]);
        }
        let root = *path.last().unwrap();
        let mut amount = demand[sink].min(supply[root]);
        for w in path.windows(2) {
            let (to, from) = (w[0], w[1]);
            if to < n {
                // residual arc: sink `from` back to source `to`
                amount = amount.min(flow[to][from - n]);
            }
        }
        for w in path.windows(2) {
            let (to, from) = (w[0], w[1]);
            if to >= n {
                flow[from][to - n] += amount;
            } else {
                flow[to][from - n] -= amount;
            }
        }
        supply[root] -= amount;
        demand[sink] -= amount;
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            total += flow[i][j] * cost[i][j];
        }
    }
    total
}

/// Wasserstein-1 gap between the next-state distributions of `(s, a)`.
pub fn model_gap(a: &TabularMdp, b: &TabularMdp, s: usize, act: usize) -> f64 {
    wasserstein1(a.row(s, act), b.row(s, act), |i, j| a.embedding_distance(i, j))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundReport {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    pub kappa: f64,
    #[serde(rename = "L")]
    pub lipschitz: f64,
    /// False when the lower bound's premise (positive estimated value) fails.
    pub applicable: bool,
}

fn start_value(mdp: &TabularMdp, values: &[f64]) -> f64 {
    mdp.initial().iter().zip(values).map(|(m, v)| m * v).sum()
}

fn check_pair(a: &TabularMdp, b: &TabularMdp, policy: &TabularPolicy) -> Result<()> {
    if !a.same_spaces(b) {
        return Err(Error::Config("MDPs have different state or action spaces".into()));
    }
    if a.gamma() != b.gamma() {
        return Err(Error::Config("MDPs have different discount factors".into()));
    }
    if a.rewards() != b.rewards() {
        return Err(Error::Config("MDPs have different rewards".into()));
    }
    if a.initial() != b.initial() {
        return Err(Error::Config("MDPs have different start distributions".into()));
    }
    if (0..a.n_states()).any(|s| a.embedding(s) != b.embedding(s)) {
        return Err(Error::Config("MDPs have different state embeddings".into()));
    }
    if policy.n_states() != a.n_states() || policy.n_actions() != a.n_actions() {
        return Err(Error::Config("policy does not match the MDPs".into()));
    }
    Ok(())
}

/// `|J_a - J_b| <= kappa * L_a * E_{rho_b}[W1(P_a, P_b)]` where `L_a` is the
/// Lipschitz constant of `V_a` and `rho_b` is the normalized discounted
/// occupancy of the policy under `b`.
pub fn check_lemma1(a: &TabularMdp, b: &TabularMdp, policy: &TabularPolicy) -> Result<BoundReport> {
    check_pair(a, b, policy)?;
    let va = exact_value(a, policy)?;
    let vb = exact_value(b, policy)?;
    let rho_b = exact_occupancy(b, policy)?;
    let k = kappa(a.gamma());
    let l = lipschitz_constant(a, &va);
    let mut expected_gap = 0.0;
    for s in 0..a.n_states() {
        for act in 0..a.n_actions() {
            let w = rho_b[s * a.n_actions() + act];
            if w > 0.0 {
                expected_gap += w * model_gap(a, b, s, act);
            }
        }
    }
    let lhs = (start_value(a, &va) - start_value(b, &vb)).abs();
    let rhs = k * l * expected_gap;
    Ok(BoundReport {
        lhs,
        rhs,
        holds: lhs <= rhs + BOUND_TOL,
        kappa: k,
        lipschitz: l,
        applicable: true,
    })
}

/// `J_true >= J_hat * E_{rho_true}[U]` with
/// `U(s, a) = (J_hat - kappa * L_hat * W1(s, a)) / J_hat`, where `L_hat` is
/// the Lipschitz constant of `V_hat`. Requires `J_hat > 0`.
pub fn check_prop1(truth: &TabularMdp, hat: &TabularMdp, policy: &TabularPolicy) -> Result<BoundReport> {
    check_pair(truth, hat, policy)?;
    let v_true = exact_value(truth, policy)?;
    let v_hat = exact_value(hat, policy)?;
    let rho = exact_occupancy(truth, policy)?;
    let k = kappa(truth.gamma());
    let l = lipschitz_constant(hat, &v_hat);
    let lhs = start_value(truth, &v_true);
    let j_hat = start_value(hat, &v_hat);
    if j_hat <= 0.0 {
        return Ok(BoundReport {
            lhs,
            rhs: f64::NAN,
            holds: false,
            kappa: k,
            lipschitz: l,
            applicable: false,
        });
    }
    // accumulate 1 - U so that a zero gap gives exactly 1 despite rho's rounding
    let mut expected_shortfall = 0.0;
    for s in 0..truth.n_states() {
        for act in 0..truth.n_actions() {
            let w = rho[s * truth.n_actions() + act];
            if w > 0.0 {
                let gap = l * model_gap(truth, hat, s, act);
                expected_shortfall += w * (1.0 - u_coefficient(j_hat, gap, k)?);
            }
        }
    }
    let rhs = j_hat * (1.0 - expected_shortfall);
    Ok(BoundReport {
        lhs,
        rhs,
        holds: lhs >= rhs - BOUND_TOL,
        kappa: k,
        lipschitz: l,
        applicable: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundCheck {
    Lemma1,
    Prop1,
}

impl BoundCheck {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundCheck::Lemma1 => "lemma1",
            BoundCheck::Prop1 => "prop1",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundRow {
    pub draw: usize,
    pub check: BoundCheck,
    #[serde(flatten)]
    pub report: BoundReport,
}

pub const BOUND_ROW_HEADER: [&str; 8] = ["draw", "check", "lhs", "rhs", "holds", "kappa", "L", "applicable"];

impl BoundRow {
    pub fn csv_record(&self) -> [String; 8] {
        let r = &self.report;
        [
            self.draw.to_string(),
            self.check.as_str().to_string(),
            r.lhs.to_string(),
            r.rhs.to_string(),
            r.holds.to_string(),
            r.kappa.to_string(),
            r.lipschitz.to_string(),
            r.applicable.to_string(),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub draws: usize,
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            draws: 100,
            n_states: 8,
            n_actions: 2,
            gamma: 0.9,
            seed: 0,
        }
    }
}

/// Random MDP pair sharing rewards and start distribution, the second a
/// perturbation of the first, plus a random policy. Rewards lie in `[0, 1]`.
pub fn random_pair<R: Rng + ?Sized>(
    opts: &VerifyOptions,
    rng: &mut R,
) -> Result<(TabularMdp, TabularMdp, TabularPolicy)> {
    let a = TabularMdp::random(opts.n_states, opts.n_actions, opts.gamma, (0.0, 1.0), rng)?;
    let strength = rng.random_range(0.0..0.5);
    let b = a.perturbed(strength, rng)?;
    let policy = TabularPolicy::random(opts.n_states, opts.n_actions, rng);
    Ok((a, b, policy))
}

/// Runs both checks on `opts.draws` random pairs.
pub fn verify_bounds(opts: &VerifyOptions) -> Result<Vec<BoundRow>> {
    if opts.n_states < 2 || opts.n_actions < 1 {
        return Err(Error::Config("need at least 2 states and 1 action".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut rows = Vec::with_capacity(2 * opts.draws);
    for draw in 0..opts.draws {
        let (a, b, policy) = random_pair(opts, &mut rng)?;
        rows.push(BoundRow {
            draw,
            check: BoundCheck::Lemma1,
            report: check_lemma1(&a, &b, &policy)?,
        });
        rows.push(BoundRow {
            draw,
            check: BoundCheck::Prop1,
            report: check_prop1(&a, &b, &policy)?,
        });
    }
    Ok(rows)
}
