use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ParamNet;
use crate::error::{Error, Result};

/// Supervised fitting schedule shared by the ensembles and behavioral cloning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub lr: f64,
    pub max_epochs: usize,
    /// Stop after this many consecutive epochs without validation improvement.
    pub patience: usize,
    pub batch_size: usize,
    pub train_fraction: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            max_epochs: 100,
            patience: 3,
            batch_size: 64,
            train_fraction: 0.85,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: usize,
    /// Mean training loss of the last epoch run.
    pub train_loss: f64,
    /// Best validation loss; the network holds the matching parameters.
    pub val_loss: f64,
    /// `(train, validation)` loss per epoch.
    pub history: Vec<(f64, f64)>,
}

/// Shuffled split into `(train, validation)` index sets, both non-empty when
/// `n >= 2`.
pub fn split_indices<R: Rng + ?Sized>(
    n: usize,
    train_fraction: f64,
    rng: &mut R,
) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let n_train = if n < 2 {
        n
    } else {
        ((n as f64 * train_fraction).round() as usize).clamp(1, n - 1)
    };
    let val = idx.split_off(n_train);
    (idx, val)
}

/// Indices drawn uniformly with replacement from `pool`, same size as `pool`.
pub fn bootstrap<R: Rng + ?Sized>(pool: &[usize], rng: &mut R) -> Vec<usize> {
    (0..pool.len())
        .map(|_| pool[rng.random_range(0..pool.len())])
        .collect()
}

/// Minibatch Adam with early stopping on a validation set; the best
/// validation parameters are restored at the end.
///
/// `sample_grad(net, i, grad)` accumulates the gradient of sample `i` into
/// `grad` and returns its loss; `val_loss(net, i)` evaluates one held-out sample.
pub fn train_early_stopping<R, G, V>(
    net: &mut ParamNet,
    train: &[usize],
    val: &[usize],
    cfg: &FitConfig,
    rng: &mut R,
    mut sample_grad: G,
    val_loss: V,
) -> Result<TrainReport>
where
    R: Rng + ?Sized,
    G: FnMut(&ParamNet, usize, &mut [f64]) -> Result<f64>,
    V: Fn(&ParamNet, usize) -> Result<f64>,
{
    if train.is_empty() || val.is_empty() {
        return Err(Error::InsufficientData {
            needed: 2,
            got: train.len() + val.len(),
        });
    }
    let eval = |net: &ParamNet| -> Result<f64> {
        let mut s = 0.0;
        for &i in val {
            s += val_loss(net, i)?;
        }
        Ok(s / val.len() as f64)
    };
    net.reset_optimizer();
    let mut best_val = eval(net)?;
    let mut best_params = net.params().to_vec();
    let mut since_best = 0;
    let mut order = train.to_vec();
    let mut grad = vec![0.0; net.num_params()];
    let mut history = Vec::new();
    let mut train_loss = f64::NAN;
    let bs = cfg.batch_size.max(1);

    for _ in 0..cfg.max_epochs {
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(bs) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in chunk {
                epoch_loss += sample_grad(net, i, &mut grad)?;
            }
            let scale = 1.0 / chunk.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            net.adam_step(&grad, cfg.lr)?;
        }
        train_loss = epoch_loss / order.len() as f64;
        let v = eval(net)?;
        history.push((train_loss, v));
        if v < best_val {
            best_val = v;
            best_params.copy_from_slice(net.params());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    net.set_params(&best_params)?;
    Ok(TrainReport {
        epochs: history.len(),
        train_loss,
        val_loss: best_val,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn split_covers_everything_once() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (tr, va) = split_indices(100, 0.85, &mut rng);
        assert_eq!(tr.len(), 85);
        assert_eq!(va.len(), 15);
        let mut all: Vec<usize> = tr.iter().chain(&va).copied().collect();
        all.sort();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        let (tr, va) = split_indices(2, 0.85, &mut rng);
        assert_eq!((tr.len(), va.len()), (1, 1));
    }

    #[test]
    fn early_stopping_fits_a_line_and_restores_best() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<f64> = (0..200).map(|i| i as f64 / 100.0 - 1.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 0.5 * x - 0.2).collect();
        let (tr, va) = split_indices(xs.len(), 0.85, &mut rng);
        let mut net = ParamNet::zeros(&[1, 1]).unwrap();
        let cfg = FitConfig {
            lr: 1e-2,
            max_epochs: 300,
            ..FitConfig::default()
        };
        let report = train_early_stopping(
            &mut net,
            &tr,
            &va,
            &cfg,
            &mut rng,
            |net, i, g| {
                let tape = net.forward_recorded(&[xs[i]])?;
                let d = tape.output()[0] - ys[i];
                net.backward_into(&tape, &[2.0 * d], g)?;
                Ok(d * d)
            },
            |net, i| Ok((net.forward(&[xs[i]])?[0] - ys[i]).powi(2)),
        )
        .unwrap();
        assert!(report.val_loss < 1e-4, "{report:?}");
        let best = report.history.iter().map(|h| h.1).fold(f64::INFINITY, f64::min);
        assert!(report.val_loss <= best);
    }
}
