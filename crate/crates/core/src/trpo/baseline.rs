use rand::seq::SliceRandom;
use rand::Rng;

use super::LabeledTrajectory;
use crate::error::{check_dim, Result};
use crate::numerics::ParamNet;

/// State-value network with input and target standardization.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueBaseline {
    net: ParamNet,
    in_mean: Vec<f64>,
    in_std: Vec<f64>,
    shift: f64,
    scale: f64,
    inputs_fixed: bool,
}

impl ValueBaseline {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        let mut sizes = vec![state_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let mut net = ParamNet::new(&sizes, rng)?;
        // start from V = 0
        let n = net.num_params();
        let mut p = net.params().to_vec();
        let last = hidden.last().copied().unwrap_or(state_dim);
        p[n - last - 1..].iter_mut().for_each(|v| *v = 0.0);
        net.set_params(&p)?;
        Ok(Self {
            net,
            in_mean: vec![0.0; state_dim],
            in_std: vec![1.0; state_dim],
            shift: 0.0,
            scale: 1.0,
            inputs_fixed: false,
        })
    }

    fn features(&self, state: &[f64]) -> Vec<f64> {
        state
            .iter()
            .zip(self.in_mean.iter().zip(&self.in_std))
            .map(|(s, (m, sd))| (s - m) / sd)
            .collect()
    }

    pub fn predict(&self, state: &[f64]) -> Result<f64> {
        check_dim("ValueBaseline::predict", self.in_mean.len(), state.len())?;
        Ok(self.net.forward(&self.features(state))?[0] * self.scale + self.shift)
    }

    /// Rescales the output layer so predictions are unchanged under a new
    /// target shift and scale.
    fn rebase_targets(&mut self, shift: f64, scale: f64) -> Result<()> {
        let n = self.net.num_params();
        let sizes = self.net.layer_sizes();
        let last_in = sizes[sizes.len() - 2];
        let ratio = self.scale / scale;
        let mut p = self.net.params().to_vec();
        for w in &mut p[n - last_in - 1..n - 1] {
            *w *= ratio;
        }
        p[n - 1] = p[n - 1] * ratio + (self.shift - shift) / scale;
        self.net.set_params(&p)?;
        self.shift = shift;
        self.scale = scale;
        Ok(())
    }

    /// Regresses the trajectories' value targets for `epochs` passes of
    /// minibatch Adam. Input statistics are frozen at the first fit. Returns
    /// the mean squared error in target units after the last epoch.
    pub fn fit<R: Rng + ?Sized>(
        &mut self,
        trajs: &[LabeledTrajectory],
        epochs: usize,
        lr: f64,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<f64> {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for traj in trajs {
            for (s, y) in traj.states.iter().zip(&traj.value_targets) {
                xs.push(s.clone());
                ys.push(*y);
            }
        }
        if xs.is_empty() {
            log::warn!("value baseline fit skipped: no targets");
            return Ok(f64::NAN);
        }
        let n = ys.len() as f64;
        if !self.inputs_fixed {
            let d = self.in_mean.len();
            for k in 0..d {
                let m = xs.iter().map(|x| x[k]).sum::<f64>() / n;
                let v = xs.iter().map(|x| (x[k] - m) * (x[k] - m)).sum::<f64>() / n;
                self.in_mean[k] = m;
                self.in_std[k] = v.sqrt().max(1e-6);
            }
            self.inputs_fixed = true;
        }
        let mean = ys.iter().sum::<f64>() / n;
        let std = (ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n).sqrt();
        self.rebase_targets(mean, std.max(1e-6))?;

        let feats: Vec<Vec<f64>> = xs.iter().map(|x| self.features(x)).collect();
        let targets: Vec<f64> = ys.iter().map(|y| (y - self.shift) / self.scale).collect();
        let mut order: Vec<usize> = (0..feats.len()).collect();
        let mut grad = vec![0.0; self.net.num_params()];
        let bs = batch_size.max(1);
        let mut last = f64::NAN;
        for _ in 0..epochs {
            order.shuffle(rng);
            let mut sse = 0.0;
            for chunk in order.chunks(bs) {
                grad.iter_mut().for_each(|g| *g = 0.0);
                for &i in chunk {
                    let tape = self.net.forward_recorded(&feats[i])?;
                    let err = tape.output()[0] - targets[i];
                    sse += err * err;
                    self.net.backward_into(&tape, &[2.0 * err], &mut grad)?;
                }
                let inv = 1.0 / chunk.len() as f64;
                grad.iter_mut().for_each(|g| *g *= inv);
                self.net.adam_step(&grad, lr)?;
            }
            last = sse / n * self.scale * self.scale;
        }
        Ok(last)
    }
}
