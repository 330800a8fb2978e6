//! Uncertainty labeler: `K` probabilistic next-state networks, the pairwise
//! agreement label `U(s, a)` and the online exploration magnitude `zeta`.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics_model::{
    check_transitions, member_rngs, network_input, EnsembleBlob, FitReport, Normalizer, TAG_LABELER,
};
use crate::error::{check_dim, Error, Result};
use crate::explorer::Transition;
use crate::dynamics_model::FictitiousTrajectory;
use crate::numerics::{
    bootstrap, pnn_nll_grad, pnn_nll_loss, split_indices, train_early_stopping, FitConfig,
    GaussianHead, ParamNet,
};
use crate::trpo::LabeledTrajectory;

pub const DEFAULT_ALPHA: f64 = 0.028;

/// When a fresh member pair is drawn while labeling a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairResample {
    PerStep,
    #[default]
    PerTrajectory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelerEnsemble {
    members: Vec<ParamNet>,
    normalizer: Normalizer,
    alpha: f64,
    state_dim: usize,
    action_dim: usize,
    fitted: bool,
    pub pair_resample: PairResample,
}

impl LabelerEnsemble {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        k: usize,
        alpha: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut sizes = vec![state_dim + action_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(2 * state_dim);
        let members = member_rngs(k, rng)
            .iter_mut()
            .map(|r| ParamNet::new(&sizes, r))
            .collect::<Result<Vec<_>>>()?;
        Self::build(
            members,
            Normalizer::identity(state_dim + action_dim, state_dim),
            alpha,
            state_dim,
            action_dim,
            false,
        )
    }

    /// Assembles a labeler from existing members; the result counts as fitted.
    pub fn from_parts(
        members: Vec<ParamNet>,
        normalizer: Normalizer,
        alpha: f64,
        state_dim: usize,
        action_dim: usize,
    ) -> Result<Self> {
        Self::build(members, normalizer, alpha, state_dim, action_dim, true)
    }

    fn build(
        members: Vec<ParamNet>,
        normalizer: Normalizer,
        alpha: f64,
        state_dim: usize,
        action_dim: usize,
        fitted: bool,
    ) -> Result<Self> {
        if members.len() < 2 {
            return Err(Error::Config(format!(
                "labeler needs at least 2 members, got {}",
                members.len()
            )));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!("labeler alpha must be positive, got {alpha}")));
        }
        for m in &members {
            check_dim("labeler member input", state_dim + action_dim, m.input_dim())?;
            check_dim("labeler member output", 2 * state_dim, m.output_dim())?;
        }
        check_dim("labeler normalizer input", state_dim + action_dim, normalizer.in_dim())?;
        check_dim("labeler normalizer output", state_dim, normalizer.out_dim())?;
        Ok(Self {
            members,
            normalizer,
            alpha,
            state_dim,
            action_dim,
            fitted,
            pair_resample: PairResample::default(),
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn is_fitted(&self) -> bool {
        self.fitted
    }

    pub fn members(&self) -> &[ParamNet] {
        &self.members
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    /// Trains every member on the Gaussian NLL of the normalized state delta.
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
        let tr_in: Vec<Vec<f64>> = train_idx.iter().map(|&i| inputs[i].clone()).collect();
        let tr_out: Vec<Vec<f64>> = train_idx.iter().map(|&i| deltas[i].clone()).collect();
        self.normalizer =
            Normalizer::fit(&tr_in, &tr_out, self.state_dim + self.action_dim, self.state_dim);
        let x: Vec<Vec<f64>> = inputs
            .iter()
            .map(|v| self.normalizer.normalize_input(v))
            .collect::<Result<_>>()?;
        let y: Vec<Vec<f64>> = deltas.iter().map(|d| self.normalizer.normalize_output(d)).collect();

        let mut reports = Vec::with_capacity(self.members.len());
        let mut rngs = member_rngs(self.members.len(), rng);
        for (member, mrng) in self.members.iter_mut().zip(rngs.iter_mut()) {
            let sample_idx = bootstrap(&train_idx, mrng);
            let report = train_early_stopping(
                member,
                &sample_idx,
                &val_idx,
                cfg,
                mrng,
                |net, i, grad| {
                    let tape = net.forward_recorded(&x[i])?;
                    let (loss, g) = pnn_nll_grad(tape.output(), &y[i])?;
                    net.backward_into(&tape, &g, grad)?;
                    Ok(loss)
                },
                |net, i| {
                    let head = GaussianHead::from_output(&net.forward(&x[i])?)?;
                    pnn_nll_loss(&head, &y[i])
                },
            )?;
            reports.push(report);
        }
        self.fitted = true;
        Ok(FitReport {
            members: reports,
            train_indices: train_idx,
            val_indices: val_idx,
        })
    }

    fn head(&self, member: usize, state: &[f64], action: &[f64]) -> Result<GaussianHead> {
        check_dim("labeler state", self.state_dim, state.len())?;
        check_dim("labeler action", self.action_dim, action.len())?;
        let x = self.normalizer.normalize_input(&network_input(state, action))?;
        GaussianHead::from_output(&self.members[member].forward(&x)?)
    }

    /// Mean next-state prediction of one member.
    pub fn predict_mean(&self, member: usize, state: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        if member >= self.members.len() {
            return Err(Error::Config(format!(
                "labeler member {member} out of range (labeler has {})",
                self.members.len()
            )));
        }
        let head = self.head(member, state, action)?;
        let delta = self.normalizer.denormalize_output(&head.mean);
        Ok(state.iter().zip(delta).map(|(s, d)| s + d).collect())
    }

    /// Per-dimension predicted variance of one member in raw state units.
    pub fn predicted_variance(&self, member: usize, state: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        if member >= self.members.len() {
            return Err(Error::Config(format!("labeler member {member} out of range")));
        }
        let head = self.head(member, state, action)?;
        Ok(head
            .variance()
            .iter()
            .zip(&self.normalizer.out_std)
            .map(|(v, s)| v * s * s)
            .collect())
    }

    fn require_fitted(&self) -> Result<()> {
        if self.fitted {
            Ok(())
        } else {
            Err(Error::State("uncertainty labeler has not been fitted".into()))
        }
    }

    fn draw_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        let idx = sample(rng, self.members.len(), 2);
        (idx.index(0), idx.index(1))
    }

    /// `exp(-alpha * |s_a - s_b|_1)` for an explicit member pair.
    pub fn label_with_pair(&self, pair: (usize, usize), state: &[f64], action: &[f64]) -> Result<f64> {
        let a = self.predict_mean(pair.0, state, action)?;
        let b = self.predict_mean(pair.1, state, action)?;
        Ok(label_from_gap(self.alpha, l1_distance(&a, &b)))
    }

    /// Label with a freshly drawn pair of distinct members.
    pub fn label<R: Rng + ?Sized>(&self, state: &[f64], action: &[f64], rng: &mut R) -> Result<f64> {
        self.require_fitted()?;
        let pair = self.draw_pair(rng);
        self.label_with_pair(pair, state, action)
    }

    /// Labels every step of a fictitious trajectory. The member pair is
    /// drawn once per trajectory unless `pair_resample` is `PerStep`.
    pub fn label_trajectory<R: Rng + ?Sized>(
        &self,
        traj: &FictitiousTrajectory,
        rng: &mut R,
    ) -> Result<LabeledTrajectory> {
        self.require_fitted()?;
        let mut pair = self.draw_pair(rng);
        let mut labels = Vec::with_capacity(traj.len());
        for t in 0..traj.len() {
            if t > 0 && self.pair_resample == PairResample::PerStep {
                pair = self.draw_pair(rng);
            }
            labels.push(self.label_with_pair(pair, &traj.states[t], &traj.actions[t])?);
        }
        Ok(LabeledTrajectory::from_fictitious(traj, labels))
    }

    /// Largest L1 error of the members' mean predictions against an observed
    /// next state.
    pub fn zeta(&self, state: &[f64], action: &[f64], true_next: &[f64]) -> Result<f64> {
        check_dim("zeta next state", self.state_dim, true_next.len())?;
        let mut worst = 0.0f64;
        for j in 0..self.members.len() {
            worst = worst.max(l1_distance(&self.predict_mean(j, state, action)?, true_next));
        }
        Ok(worst)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        EnsembleBlob {
            tag: TAG_LABELER,
            state_dim: self.state_dim,
            action_dim: self.action_dim,
            normalizer: self.normalizer.clone(),
            alpha: self.alpha,
            members: self.members.clone(),
        }
        .to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let blob = EnsembleBlob::from_bytes(bytes, TAG_LABELER)?;
        Self::from_parts(blob.members, blob.normalizer, blob.alpha, blob.state_dim, blob.action_dim)
    }
}

pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// `exp(-alpha * gap)`.
pub fn label_from_gap(alpha: f64, gap: f64) -> f64 {
    (-alpha * gap).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Member whose mean output is a constant normalized delta `c`.
    fn constant_member(c: f64) -> ParamNet {
        let mut net = ParamNet::zeros(&[2, 2]).unwrap();
        // weights (2x2) then biases: mean bias c, log-variance bias 0
        let mut p = net.params().to_vec();
        p[4] = c;
        net.set_params(&p).unwrap();
        net
    }

    fn labeler(consts: &[f64]) -> LabelerEnsemble {
        LabelerEnsemble::from_parts(
            consts.iter().map(|&c| constant_member(c)).collect(),
            Normalizer::identity(2, 1),
            DEFAULT_ALPHA,
            1,
            1,
        )
        .unwrap()
    }

    #[test]
    fn needs_two_members_and_positive_alpha() {
        let one = vec![constant_member(0.0)];
        assert!(LabelerEnsemble::from_parts(one, Normalizer::identity(2, 1), 0.1, 1, 1).is_err());
        let two = vec![constant_member(0.0), constant_member(0.0)];
        assert!(LabelerEnsemble::from_parts(two, Normalizer::identity(2, 1), 0.0, 1, 1).is_err());
    }

    #[test]
    fn identical_members_give_one() {
        let l = labeler(&[0.3, 0.3]);
        assert_eq!(l.label(&[1.0], &[0.0], &mut rng(0)).unwrap(), 1.0);
    }

    #[test]
    fn unit_gap_label() {
        let l = labeler(&[0.0, 1.0]);
        let u = l.label(&[0.0], &[0.0], &mut rng(0)).unwrap();
        assert!((u - (-0.028f64).exp()).abs() < 1e-15);
        assert!((u - 0.97238).abs() < 1e-5);
    }

    #[test]
    fn larger_gap_gives_smaller_label() {
        let mut prev = 1.0;
        for gap in [0.5, 1.0, 2.0, 10.0] {
            let u = labeler(&[0.0, gap]).label(&[0.0], &[0.0], &mut rng(1)).unwrap();
            assert!(u < prev);
            prev = u;
        }
    }

    #[test]
    fn unfitted_labeler_is_a_state_error() {
        let l = LabelerEnsemble::new(1, 1, &[4], 3, DEFAULT_ALPHA, &mut rng(0)).unwrap();
        assert!(matches!(l.label(&[0.0], &[0.0], &mut rng(0)), Err(Error::State(_))));
    }

    #[test]
    fn zeta_examples() {
        let l = labeler(&[0.0, 2.0]);
        assert_eq!(l.zeta(&[0.0], &[0.0], &[1.0]).unwrap(), 1.0);
        let exact = labeler(&[0.5, 0.5, 0.5]);
        assert_eq!(exact.zeta(&[1.0], &[0.0], &[1.5]).unwrap(), 0.0);
    }

    #[test]
    fn zeta_matches_member_loop() {
        let mut r = rng(3);
        let l = LabelerEnsemble::new(3, 2, &[6], 4, DEFAULT_ALPHA, &mut r).unwrap();
        let s = [0.1, -0.4, 0.9];
        let a = [0.3, -0.2];
        let truth = [0.0, 0.5, 1.0];
        let mut want = 0.0f64;
        for j in 0..4 {
            let p = l.predict_mean(j, &s, &a).unwrap();
            let e: f64 = (0..3).map(|i| (p[i] - truth[i]).abs()).sum();
            want = want.max(e);
        }
        assert_eq!(l.zeta(&s, &a, &truth).unwrap(), want);
    }

    fn linear_data(n: usize, noise_std: f64, rng: &mut ChaCha8Rng) -> Vec<Transition> {
        let noise = Normal::new(0.0, noise_std.max(1e-300)).unwrap();
        (0..n)
            .map(|_| {
                let s: f64 = rng.random_range(-1.0..1.0);
                let a: f64 = rng.random_range(-1.0..1.0);
                let eps = if noise_std > 0.0 { noise.sample(rng) } else { 0.0 };
                Transition {
                    state: vec![s],
                    action: vec![a],
                    reward: 0.0,
                    next_state: vec![s + a + eps],
                    done: false,
                }
            })
            .collect()
    }

    fn mean_variance(l: &LabelerEnsemble, data: &[Transition]) -> f64 {
        let mut sum = 0.0;
        let mut n = 0.0;
        for t in data {
            for j in 0..l.len() {
                sum += l.predicted_variance(j, &t.state, &t.action).unwrap()[0];
                n += 1.0;
            }
        }
        sum / n
    }

    fn cfg() -> FitConfig {
        FitConfig {
            max_epochs: 200,
            patience: 10,
            batch_size: 32,
            ..FitConfig::default()
        }
    }

    #[test]
    fn variance_shrinks_on_deterministic_data() {
        let mut r = rng(10);
        let data = linear_data(400, 0.0, &mut r);
        let mut l = LabelerEnsemble::new(1, 1, &[32, 32], 3, DEFAULT_ALPHA, &mut r).unwrap();
        l.normalizer = Normalizer::fit(
            &data.iter().map(|t| network_input(&t.state, &t.action)).collect::<Vec<_>>(),
            &data.iter().map(|t| vec![t.next_state[0] - t.state[0]]).collect::<Vec<_>>(),
            2,
            1,
        );
        let before = mean_variance(&l, &data);
        l.fit(&data, &cfg(), &mut r).unwrap();
        let after = mean_variance(&l, &data);
        assert!(after < 0.1 * before, "before {before} after {after}");
    }

    #[test]
    fn variance_is_calibrated_to_target_noise() {
        let mut r = rng(11);
        let data = linear_data(1500, 0.5, &mut r);
        let mut l = LabelerEnsemble::new(1, 1, &[32, 32], 3, DEFAULT_ALPHA, &mut r).unwrap();
        let report = l.fit(&data, &cfg(), &mut r).unwrap();
        let val: Vec<Transition> = report.val_indices.iter().map(|&i| data[i].clone()).collect();
        let v = mean_variance(&l, &val);
        assert!((0.1..=0.6).contains(&v), "mean predicted variance {v}");
    }

    #[test]
    fn empty_data_is_rejected() {
        let mut l = LabelerEnsemble::new(1, 1, &[4], 3, DEFAULT_ALPHA, &mut rng(0)).unwrap();
        assert!(l.fit(&[], &FitConfig::default(), &mut rng(0)).is_err());
    }

    #[test]
    fn checkpoint_roundtrip() {
        let l = labeler(&[0.1, 0.7, -0.2]);
        let back = LabelerEnsemble::from_bytes(&l.to_bytes()).unwrap();
        assert_eq!(back.members(), l.members());
        assert_eq!(back.alpha(), l.alpha());
    }
}
