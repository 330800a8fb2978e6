//! Label-weighted trust-region policy optimization on fictitious rollouts.

mod baseline;
mod bc;

use serde::{Deserialize, Serialize};

use crate::dynamics_model::FictitiousTrajectory;
use crate::error::{Error, Result};
use crate::explorer::GaussianPolicy;
use crate::numerics::Tape;

pub use baseline::ValueBaseline;
pub use bc::{bc_init, BC_LOG_STD, BC_LR};

/// Fewest steps a batch must hold before a trust-region update is attempted.
pub const MIN_BATCH_STEPS: usize = 500;
/// Slack on the KL constraint when accepting a line-search candidate.
pub const KL_TOLERANCE: f64 = 1e-8;
const CG_RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrustRegionConfig {
    pub delta: f64,
    pub cg_iters: usize,
    pub backtrack_coeff: f64,
    pub backtrack_steps: usize,
    pub damping: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
}

impl Default for TrustRegionConfig {
    fn default() -> Self {
        Self {
            delta: 0.05,
            cg_iters: 10,
            backtrack_coeff: 0.8,
            backtrack_steps: 10,
            damping: 0.1,
            gamma: 0.99,
            gae_lambda: 0.95,
        }
    }
}

impl TrustRegionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) {
            return Err(Error::Config(format!("trust-region delta must be positive, got {}", self.delta)));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(Error::Config(format!("gae_lambda must lie in [0, 1], got {}", self.gae_lambda)));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        if !(self.backtrack_coeff > 0.0 && self.backtrack_coeff < 1.0) {
            return Err(Error::Config(format!(
                "backtrack_coeff must lie in (0, 1), got {}",
                self.backtrack_coeff
            )));
        }
        if self.damping < 0.0 {
            return Err(Error::Config("damping must be non-negative".into()));
        }
        Ok(())
    }
}

/// A fictitious trajectory with per-step labels and, once [`compute_advantages`]
/// has run, advantages and value targets.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTrajectory {
    /// `len() + 1` states.
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub unit_actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub labels: Vec<f64>,
    pub advantages: Vec<f64>,
    pub value_targets: Vec<f64>,
    pub terminal: bool,
    pub model_index: usize,
}

impl LabeledTrajectory {
    pub fn from_fictitious(traj: &FictitiousTrajectory, labels: Vec<f64>) -> Self {
        debug_assert_eq!(labels.len(), traj.len());
        Self {
            states: traj.states.clone(),
            actions: traj.actions.clone(),
            unit_actions: traj.unit_actions.clone(),
            rewards: traj.rewards.clone(),
            log_probs: traj.log_probs.clone(),
            labels,
            advantages: Vec::new(),
            value_targets: Vec::new(),
            terminal: traj.terminal,
            model_index: traj.model_index,
        }
    }

    /// Every step labeled 1.
    pub fn unit_labeled(traj: &FictitiousTrajectory) -> Self {
        Self::from_fictitious(traj, vec![1.0; traj.len()])
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Generalized advantage estimation. `values` holds `V(s_0..=s_T)`; the
/// bootstrap value is replaced by 0 when the last state is terminal.
pub fn gae(rewards: &[f64], values: &[f64], terminal: bool, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    debug_assert_eq!(values.len(), n + 1);
    let mut adv = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let next_v = if t + 1 == n && terminal { 0.0 } else { values[t + 1] };
        let td = rewards[t] + gamma * next_v - values[t];
        acc = td + gamma * lambda * acc;
        adv[t] = acc;
    }
    let targets = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, targets)
}

/// Evaluates the baseline on every state and fills advantages and value targets.
pub fn compute_advantages(
    trajs: &mut [LabeledTrajectory],
    baseline: &ValueBaseline,
    cfg: &TrustRegionConfig,
) -> Result<()> {
    for traj in trajs.iter_mut() {
        let values = traj
            .states
            .iter()
            .map(|s| baseline.predict(s))
            .collect::<Result<Vec<_>>>()?;
        let (adv, targets) = gae(&traj.rewards, &values, traj.terminal, cfg.gamma, cfg.gae_lambda);
        traj.advantages = adv;
        traj.value_targets = targets;
    }
    Ok(())
}

/// Flattened update batch together with the linearization of the policy it
/// was built against.
#[derive(Debug, Clone)]
pub struct TrpoBatch {
    states: Vec<Vec<f64>>,
    unit_actions: Vec<Vec<f64>>,
    old_log_probs: Vec<f64>,
    old_means: Vec<Vec<f64>>,
    old_log_std: Vec<f64>,
    tapes: Vec<Tape>,
    /// Normalized advantage times label.
    weights: Vec<f64>,
    labels: Vec<f64>,
}

impl TrpoBatch {
    /// Advantages normalized over the batch, then multiplied by each step's label.
    pub fn weighted(trajs: &[LabeledTrajectory], policy: &GaussianPolicy) -> Result<Self> {
        Self::build(trajs, policy, true)
    }

    /// Labels ignored (treated as 1).
    pub fn unweighted(trajs: &[LabeledTrajectory], policy: &GaussianPolicy) -> Result<Self> {
        Self::build(trajs, policy, false)
    }

    fn build(trajs: &[LabeledTrajectory], policy: &GaussianPolicy, use_labels: bool) -> Result<Self> {
        let mut b = Self {
            states: Vec::new(),
            unit_actions: Vec::new(),
            old_log_probs: Vec::new(),
            old_means: Vec::new(),
            old_log_std: policy.log_std().to_vec(),
            tapes: Vec::new(),
            weights: Vec::new(),
            labels: Vec::new(),
        };
        let mut advantages = Vec::new();
        for traj in trajs {
            if traj.advantages.len() != traj.len() {
                return Err(Error::State("advantages have not been computed for a trajectory".into()));
            }
            for t in 0..traj.len() {
                let tape = policy.mean_net().forward_recorded(&traj.states[t])?;
                b.old_means.push(tape.output().iter().map(|m| m.tanh()).collect());
                b.tapes.push(tape);
                b.states.push(traj.states[t].clone());
                b.unit_actions.push(traj.unit_actions[t].clone());
                b.old_log_probs.push(traj.log_probs[t]);
                b.labels.push(if use_labels { traj.labels[t] } else { 1.0 });
                advantages.push(traj.advantages[t]);
            }
        }
        if b.states.is_empty() {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        let n = advantages.len() as f64;
        let mean = advantages.iter().sum::<f64>() / n;
        let var = advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
        let std = var.sqrt().max(1e-8);
        b.weights = advantages
            .iter()
            .zip(&b.labels)
            .map(|(a, u)| (a - mean) / std * u)
            .collect();
        Ok(b)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn mean_label(&self) -> f64 {
        self.labels.iter().sum::<f64>() / self.labels.len() as f64
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Mean of `exp(log pi(a|s) - log pi_old(a|s)) * weight` over the batch.
    pub fn surrogate(&self, policy: &GaussianPolicy) -> Result<f64> {
        let mut total = 0.0;
        for i in 0..self.len() {
            let lp = policy.log_prob(&self.states[i], &self.unit_actions[i])?;
            total += (lp - self.old_log_probs[i]).exp() * self.weights[i];
        }
        Ok(total / self.len() as f64)
    }

    /// Mean `KL(pi(.|s) || pi_old(.|s))` over the batch states.
    pub fn kl(&self, policy: &GaussianPolicy) -> Result<f64> {
        let mut total = 0.0;
        for i in 0..self.len() {
            let mean = policy.unit_mean(&self.states[i])?;
            total += gaussian_kl(&mean, policy.log_std(), &self.old_means[i], &self.old_log_std);
        }
        Ok(total / self.len() as f64)
    }

    /// Gradient of [`Self::surrogate`] at the batch's own policy, in the
    /// policy's flat parameter layout.
    pub fn surrogate_gradient(&self, policy: &GaussianPolicy) -> Result<Vec<f64>> {
        let net = policy.mean_net();
        let n_net = net.num_params();
        let mut grad = vec![0.0; n_net + policy.action_dim()];
        let inv_var: Vec<f64> = self.old_log_std.iter().map(|l| (-2.0 * l).exp()).collect();
        let mut out_grad = vec![0.0; policy.action_dim()];
        for i in 0..self.len() {
            let w = self.weights[i];
            if w == 0.0 {
                continue;
            }
            let u = &self.old_means[i];
            for k in 0..u.len() {
                let diff = self.unit_actions[i][k] - u[k];
                out_grad[k] = w * diff * inv_var[k] * (1.0 - u[k] * u[k]);
                grad[n_net + k] += w * (diff * diff * inv_var[k] - 1.0);
            }
            net.backward_into(&self.tapes[i], &out_grad, &mut grad[..n_net])?;
        }
        let scale = 1.0 / self.len() as f64;
        grad.iter_mut().for_each(|g| *g *= scale);
        Ok(grad)
    }

    /// `(F + damping I) v` where `F` is the Hessian of the mean KL at the
    /// batch's own policy.
    pub fn fisher_vector_product(&self, policy: &GaussianPolicy, v: &[f64], damping: f64) -> Result<Vec<f64>> {
        let net = policy.mean_net();
        let n_net = net.num_params();
        let d = policy.action_dim();
        if v.len() != n_net + d {
            return Err(Error::Dimension {
                context: "fisher_vector_product",
                expected: n_net + d,
                got: v.len(),
            });
        }
        let inv_var: Vec<f64> = self.old_log_std.iter().map(|l| (-2.0 * l).exp()).collect();
        let mut out = vec![0.0; n_net + d];
        let mut y = vec![0.0; d];
        for i in 0..self.len() {
            let u = &self.old_means[i];
            let jv = net.jvp(&self.tapes[i], &v[..n_net])?;
            for k in 0..d {
                let dk = 1.0 - u[k] * u[k];
                y[k] = dk * dk * jv[k] * inv_var[k];
            }
            net.backward_into(&self.tapes[i], &y, &mut out[..n_net])?;
        }
        let scale = 1.0 / self.len() as f64;
        for (o, vi) in out[..n_net].iter_mut().zip(&v[..n_net]) {
            *o = *o * scale + damping * vi;
        }
        for k in 0..d {
            out[n_net + k] = (2.0 + damping) * v[n_net + k];
        }
        Ok(out)
    }
}

/// `KL(N(m1, e^{2 l1}) || N(m0, e^{2 l0}))` for diagonal Gaussians.
pub fn gaussian_kl(m1: &[f64], l1: &[f64], m0: &[f64], l0: &[f64]) -> f64 {
    let mut kl = 0.0;
    for k in 0..m1.len() {
        let var0 = (2.0 * l0[k]).exp();
        let diff = m1[k] - m0[k];
        kl += l0[k] - l1[k] + ((2.0 * l1[k]).exp() + diff * diff) / (2.0 * var0) - 0.5;
    }
    kl
}

/// Solves `A x = b` for symmetric positive-definite `A` given as a product.
pub fn conjugate_gradient<F>(mut apply: F, b: &[f64], iters: usize) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let mut x = vec![0.0; b.len()];
    let mut r = b.to_vec();
    let mut p = b.to_vec();
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    for _ in 0..iters {
        if rr < CG_RESIDUAL_TOL {
            break;
        }
        let ap = apply(&p)?;
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !(pap > 0.0) {
            break;
        }
        let alpha = rr / pap;
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rr_new / rr;
        for i in 0..p.len() {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepReport {
    pub iteration: usize,
    pub surrogate_before: f64,
    pub surrogate_after: f64,
    pub kl: f64,
    pub step_accepted: bool,
    pub mean_label: f64,
    pub backtracks: usize,
    #[serde(skip)]
    pub diagnostic: Option<String>,
}

impl StepReport {
    pub const CSV_HEADER: [&'static str; 6] = [
        "iteration",
        "surrogate_before",
        "surrogate_after",
        "kl",
        "step_accepted",
        "mean_label",
    ];

    pub fn csv_record(&self) -> [String; 6] {
        [
            self.iteration.to_string(),
            self.surrogate_before.to_string(),
            self.surrogate_after.to_string(),
            self.kl.to_string(),
            self.step_accepted.to_string(),
            self.mean_label.to_string(),
        ]
    }
}

/// One natural-gradient step with backtracking. On failure the policy is
/// left unchanged and the report says why.
pub fn trpo_step(policy: &mut GaussianPolicy, batch: &TrpoBatch, cfg: &TrustRegionConfig) -> Result<StepReport> {
    cfg.validate()?;
    if batch.len() < MIN_BATCH_STEPS {
        return Err(Error::InsufficientData {
            needed: MIN_BATCH_STEPS,
            got: batch.len(),
        });
    }
    let old_params = policy.flat_params();
    let surrogate_before = batch.surrogate(policy)?;
    let mut report = StepReport {
        iteration: 0,
        surrogate_before,
        surrogate_after: surrogate_before,
        kl: 0.0,
        step_accepted: false,
        mean_label: batch.mean_label(),
        backtracks: 0,
        diagnostic: None,
    };
    let grad = batch.surrogate_gradient(policy)?;
    if grad.iter().any(|g| !g.is_finite()) {
        report.diagnostic = Some("non-finite surrogate gradient".into());
        return Ok(report);
    }
    if grad.iter().all(|g| *g == 0.0) {
        report.diagnostic = Some("zero surrogate gradient".into());
        return Ok(report);
    }
    let frozen = &*policy;
    let dir = conjugate_gradient(|v| batch.fisher_vector_product(frozen, v, cfg.damping), &grad, cfg.cg_iters)?;
    let fd = batch.fisher_vector_product(frozen, &dir, cfg.damping)?;
    let shs: f64 = dir.iter().zip(&fd).map(|(a, b)| a * b).sum();
    if !(shs > 0.0 && shs.is_finite()) {
        report.diagnostic = Some(format!("degenerate natural-gradient curvature {shs}"));
        return Ok(report);
    }
    let full_step = (2.0 * cfg.delta / shs).sqrt();
    let mut frac = 1.0;
    let mut candidate = vec![0.0; old_params.len()];
    for k in 0..cfg.backtrack_steps {
        for i in 0..candidate.len() {
            candidate[i] = old_params[i] + frac * full_step * dir[i];
        }
        policy.set_flat_params(&candidate)?;
        let surr = batch.surrogate(policy)?;
        let kl = batch.kl(policy)?;
        if surr.is_finite() && kl.is_finite() && surr - surrogate_before > 0.0 && kl <= cfg.delta + KL_TOLERANCE {
            report.surrogate_after = surr;
            report.kl = kl;
            report.step_accepted = true;
            report.backtracks = k;
            return Ok(report);
        }
        frac *= cfg.backtrack_coeff;
    }
    policy.set_flat_params(&old_params)?;
    report.backtracks = cfg.backtrack_steps;
    report.diagnostic = Some("line search exhausted".into());
    Ok(report)
}
