//! Ensemble of deterministic next-state models and the fictitious-rollout
//! generator used for offline policy training.

mod container;

mod normalizer;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::environments::Env;
use crate::error::{check_dim, Error, Result};
use crate::explorer::{GaussianPolicy, Transition};
use crate::numerics::{
    bootstrap, l2_next_state_loss, split_indices, train_early_stopping, FitConfig, ParamNet,
    TrainReport,
};

pub use container::{EnsembleBlob, CONTAINER_VERSION, TAG_DYNAMICS, TAG_LABELER};
pub use normalizer::Normalizer;

/// Minimum number of transitions accepted by the ensemble fits.
pub const MIN_FIT_TRANSITIONS: usize = 50;

/// Ensemble of `N` networks mapping `(s, a)` to a normalized state delta.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsEnsemble {
    members: Vec<ParamNet>,
    normalizer: Normalizer,
    state_dim: usize,
    action_dim: usize,
    /// Per-member validation loss history of the latest fit.
    pub train_stats: Vec<Vec<f64>>,
}

/// Outcome of [`DynamicsEnsemble::fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub members: Vec<TrainReport>,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
}

impl FitReport {
    pub fn mean_val_loss(&self) -> f64 {
        self.members.iter().map(|m| m.val_loss).sum::<f64>() / self.members.len() as f64
    }
}

/// A trajectory generated by one ensemble member.
#[derive(Debug, Clone, PartialEq)]
pub struct FictitiousTrajectory {
    /// `len() + 1` states.
    pub states: Vec<Vec<f64>>,
    /// Clipped environment actions fed to the model and the reward function.
    pub actions: Vec<Vec<f64>>,
    /// Unit-space policy draws the log-probabilities refer to.
    pub unit_actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub model_index: usize,
    /// Last state is terminal under the environment's terminal function.
    pub terminal: bool,
    /// Cut short because the model produced a non-finite state.
    pub non_finite: bool,
}

impl FictitiousTrajectory {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

pub(crate) fn network_input(state: &[f64], action: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(state.len() + action.len());
    x.extend_from_slice(state);
    x.extend_from_slice(action);
    x
}

/// Derives one independent generator per member from `rng`.
pub(crate) fn member_rngs<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<ChaCha8Rng> {
    (0..n).map(|_| ChaCha8Rng::seed_from_u64(rng.random())).collect()
}

pub(crate) fn check_transitions(data: &[Transition], state_dim: usize, action_dim: usize) -> Result<()> {
    if data.len() < MIN_FIT_TRANSITIONS {
        return Err(Error::InsufficientData {
            needed: MIN_FIT_TRANSITIONS,
            got: data.len(),
        });
    }
    for t in data {
        check_dim("transition state", state_dim, t.state.len())?;
        check_dim("transition action", action_dim, t.action.len())?;
        check_dim("transition next state", state_dim, t.next_state.len())?;
    }
    Ok(())
}

impl DynamicsEnsemble {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        n_members: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if n_members == 0 {
            return Err(Error::Config("dynamics ensemble needs at least one member".into()));
        }
        let mut sizes = vec![state_dim + action_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(state_dim);
        let members = member_rngs(n_members, rng)
            .iter_mut()
            .map(|r| ParamNet::new(&sizes, r))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            members,
            normalizer: Normalizer::identity(state_dim + action_dim, state_dim),
            state_dim,
            action_dim,
            train_stats: vec![Vec::new(); n_members],
        })
    }

    pub fn from_parts(
        members: Vec<ParamNet>,
        normalizer: Normalizer,
        state_dim: usize,
        action_dim: usize,
    ) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Config("dynamics ensemble needs at least one member".into()));
        }
        for m in &members {
            check_dim("dynamics member input", state_dim + action_dim, m.input_dim())?;
            check_dim("dynamics member output", state_dim, m.output_dim())?;
            if m.layer_sizes() != members[0].layer_sizes() {
                return Err(Error::Config("dynamics members must share a layer shape".into()));
            }
        }
        check_dim("dynamics normalizer input", state_dim + action_dim, normalizer.in_dim())?;
        check_dim("dynamics normalizer output", state_dim, normalizer.out_dim())?;
        let n = members.len();
        Ok(Self {
            members,
            normalizer,
            state_dim,
            action_dim,
            train_stats: vec![Vec::new(); n],
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[ParamNet] {
        &self.members
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    /// Fits every member on its own bootstrap resample of a shared 85/15
    /// split, minimizing the squared error of the reconstructed next state.
    pub fn fit<R: Rng + ?Sized>(
        &mut self,
        data: &[Transition],
        cfg: &FitConfig,
        rng: &mut R,
    ) -> Result<FitReport> {
        check_transitions(data, self.state_dim, self.action_dim)?;
        let inputs: Vec<Vec<f64>> = data.iter().map(|t| network_input(&t.state, &t.action)).collect();
        let deltas: Vec<Vec<f64>> = data
            .iter()
            .map(|t| t.next_state.iter().zip(&t.state).map(|(n, s)| n - s).collect())
            .collect();
        let (train_idx, val_idx) = split_indices(data.len(), cfg.train_fraction, rng);
        let train_inputs: Vec<Vec<f64>> = train_idx.iter().map(|&i| inputs[i].clone()).collect();
        let train_deltas: Vec<Vec<f64>> = train_idx.iter().map(|&i| deltas[i].clone()).collect();
        self.normalizer = Normalizer::fit(
            &train_inputs,
            &train_deltas,
            self.state_dim + self.action_dim,
            self.state_dim,
        );
        let norm_inputs: Vec<Vec<f64>> = inputs
            .iter()
            .map(|x| self.normalizer.normalize_input(x))
            .collect::<Result<_>>()?;

        let normalizer = self.normalizer.clone();
        let mut reports = Vec::with_capacity(self.members.len());
        let mut rngs = member_rngs(self.members.len(), rng);
        for (j, (member, mrng)) in self.members.iter_mut().zip(rngs.iter_mut()).enumerate() {
            let sample = bootstrap(&train_idx, mrng);
            let predict = |net: &ParamNet, i: usize, out: &[f64]| -> Vec<f64> {
                let _ = net;
                data[i]
                    .state
                    .iter()
                    .zip(normalizer.denormalize_output(out))
                    .map(|(s, d)| s + d)
                    .collect()
            };
            let report = train_early_stopping(
                member,
                &sample,
                &val_idx,
                cfg,
                mrng,
                |net, i, grad| {
                    let tape = net.forward_recorded(&norm_inputs[i])?;
                    let pred = predict(net, i, tape.output());
                    let target = &data[i].next_state;
                    let loss = l2_next_state_loss(&pred, target)?;
                    let g: Vec<f64> = pred
                        .iter()
                        .zip(target)
                        .zip(&normalizer.out_std)
                        .map(|((p, t), s)| 2.0 * (p - t) * s)
                        .collect();
                    net.backward_into(&tape, &g, grad)?;
                    Ok(loss)
                },
                |net, i| {
                    let out = net.forward(&norm_inputs[i])?;
                    l2_next_state_loss(&predict(net, i, &out), &data[i].next_state)
                },
            )?;
            self.train_stats[j] = report.history.iter().map(|h| h.1).collect();
            reports.push(report);
        }
        Ok(FitReport {
            members: reports,
            train_indices: train_idx,
            val_indices: val_idx,
        })
    }

    /// `s + denormalize(member_j(normalize(s ++ a)))`.
    pub fn predict(&self, member: usize, state: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        let net = self.members.get(member).ok_or_else(|| {
            Error::Config(format!(
                "ensemble member {member} out of range (ensemble has {})",
                self.members.len()
            ))
        })?;
        check_dim("DynamicsEnsemble::predict (state)", self.state_dim, state.len())?;
        check_dim("DynamicsEnsemble::predict (action)", self.action_dim, action.len())?;
        let x = self.normalizer.normalize_input(&network_input(state, action))?;
        let delta = self.normalizer.denormalize_output(&net.forward(&x)?);
        Ok(state.iter().zip(delta).map(|(s, d)| s + d).collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        EnsembleBlob {
            tag: TAG_DYNAMICS,
            state_dim: self.state_dim,
            action_dim: self.action_dim,
            normalizer: self.normalizer.clone(),
            alpha: 0.0,
            members: self.members.clone(),
        }
        .to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let blob = EnsembleBlob::from_bytes(bytes, TAG_DYNAMICS)?;
        Self::from_parts(blob.members, blob.normalizer, blob.state_dim, blob.action_dim)
    }
}

/// Rolls the stochastic policy through the learned dynamics, one trajectory
/// per start state. Each trajectory uses `member` if given, otherwise a
/// member drawn uniformly. Rewards are relabeled with the environment's
/// reward function; trajectories stop at `rollout_length`, at a terminal
/// state, or just before the first non-finite prediction.
pub fn rollout<R: Rng + ?Sized>(
    ensemble: &DynamicsEnsemble,
    policy: &GaussianPolicy,
    env: &Env,
    start_states: &[Vec<f64>],
    rollout_length: usize,
    member: Option<usize>,
    rng: &mut R,
) -> Result<Vec<FictitiousTrajectory>> {
    if let Some(j) = member {
        if j >= ensemble.len() {
            return Err(Error::Config(format!(
                "ensemble member {j} out of range (ensemble has {})",
                ensemble.len()
            )));
        }
    }
    let spec = env.spec();
    let mut out = Vec::with_capacity(start_states.len());
    for start in start_states {
        check_dim("rollout start state", ensemble.state_dim, start.len())?;
        let j = member.unwrap_or_else(|| rng.random_range(0..ensemble.len()));
        let mut traj = FictitiousTrajectory {
            states: vec![start.clone()],
            actions: Vec::new(),
            unit_actions: Vec::new(),
            rewards: Vec::new(),
            log_probs: Vec::new(),
            model_index: j,
            terminal: false,
            non_finite: false,
        };
        let mut state = start.clone();
        for _ in 0..rollout_length {
            let draw = policy.sample(&state, rng)?;
            let action = spec.clip_action(&draw.action);
            let next = ensemble.predict(j, &state, &action)?;
            if next.iter().any(|v| !v.is_finite()) {
                traj.non_finite = true;
                break;
            }
            traj.rewards.push(env.reward(&state, &action, &next));
            traj.actions.push(action);
            traj.unit_actions.push(draw.unit_action);
            traj.log_probs.push(draw.log_prob);
            traj.states.push(next.clone());
            state = next;
            if env.is_terminal(&state) {
                traj.terminal = true;
                break;
            }
        }
        out.push(traj);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn zero_ensemble(state_dim: usize, action_dim: usize) -> DynamicsEnsemble {
        let member = ParamNet::zeros(&[state_dim + action_dim, 4, state_dim]).unwrap();
        DynamicsEnsemble::from_parts(
            vec![member.clone(), member],
            Normalizer::identity(state_dim + action_dim, state_dim),
            state_dim,
            action_dim,
        )
        .unwrap()
    }

    #[test]
    fn zero_member_predicts_no_change() {
        let ens = zero_ensemble(4, 2);
        let s = vec![0.3, -1.0, 2.0, 0.5];
        assert_eq!(ens.predict(1, &s, &[0.4, 0.1]).unwrap(), s);
    }

    #[test]
    fn member_index_out_of_range() {
        let ens = zero_ensemble(1, 1);
        assert!(matches!(ens.predict(2, &[0.0], &[0.0]), Err(Error::Config(_))));
    }

    #[test]
    fn too_little_data_is_rejected() {
        let mut ens = DynamicsEnsemble::new(1, 1, &[4], 2, &mut rng(0)).unwrap();
        let err = ens.fit(&[], &FitConfig::default(), &mut rng(1)).unwrap_err();
        assert!(matches!(err, Error::InsufficientData { needed: 50, got: 0 }));
    }

    #[test]
    fn rollout_length_one_and_relabeled_rewards() {
        let env = Env::by_name("point_mass").unwrap();
        let ens = zero_ensemble(4, 2);
        let mut r = rng(3);
        let policy = GaussianPolicy::new(env.spec(), &[8], -1.0, &mut r).unwrap();
        let starts = vec![vec![0.0; 4], vec![1.0, 1.0, 0.5, 0.0]];
        let trajs = rollout(&ens, &policy, &env, &starts, 1, None, &mut r).unwrap();
        assert_eq!(trajs.len(), 2);
        for t in &trajs {
            assert_eq!(t.len(), 1);
            assert_eq!(t.states.len(), 2);
            assert_eq!(t.rewards[0], env.reward(&t.states[0], &t.actions[0], &t.states[1]));
            assert!(env.spec().action_in_bounds(&t.actions[0]));
        }
    }

    #[test]
    fn rollout_is_reproducible() {
        let env = Env::by_name("pendulum").unwrap();
        let mut r = rng(4);
        let ens = DynamicsEnsemble::new(3, 1, &[8], 3, &mut r).unwrap();
        let policy = GaussianPolicy::new(env.spec(), &[8], -1.0, &mut r).unwrap();
        let starts = vec![vec![1.0, 0.0, 0.0]; 3];
        let a = rollout(&ens, &policy, &env, &starts, 20, None, &mut rng(9)).unwrap();
        let b = rollout(&ens, &policy, &env, &starts, 20, None, &mut rng(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn checkpoint_roundtrip_and_tag_check() {
        let ens = DynamicsEnsemble::new(2, 1, &[5], 3, &mut rng(5)).unwrap();
        let bytes = ens.to_bytes();
        assert_eq!(bytes[0], CONTAINER_VERSION);
        let back = DynamicsEnsemble::from_bytes(&bytes).unwrap();
        assert_eq!(back.members(), ens.members());
        assert!(EnsembleBlob::from_bytes(&bytes, TAG_LABELER).is_err());
    }
}
