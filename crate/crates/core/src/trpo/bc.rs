use rand::Rng;

use crate::error::Result;
use crate::explorer::{GaussianPolicy, Transition};
use crate::numerics::{split_indices, train_early_stopping, FitConfig, TrainReport};

pub const BC_LR: f64 = 5e-4;
/// Policy standard deviation (unit action space) after cloning.
pub const BC_LOG_STD: f64 = -1.203_972_804_325_936; // ln 0.3

/// Fits `tanh(mu(s))` to the stored actions by squared error, warm-starting
/// from the current mean network, then resets `log_std` to `ln 0.3`.
/// With fewer than two transitions the policy is left untouched and `None`
/// is returned.
pub fn bc_init<R: Rng + ?Sized>(
    policy: &mut GaussianPolicy,
    data: &[Transition],
    cfg: &FitConfig,
    rng: &mut R,
) -> Result<Option<TrainReport>> {
    if data.len() < 2 {
        log::warn!(
            "behavioral cloning skipped: {} transition(s) available",
            data.len()
        );
        return Ok(None);
    }
    let targets: Vec<Vec<f64>> = data.iter().map(|t| policy.to_unit(&t.action)).collect();
    let (train, val) = split_indices(data.len(), cfg.train_fraction, rng);
    let mut net = policy.mean_net().clone();
    net.reset_optimizer();
    let report = train_early_stopping(
        &mut net,
        &train,
        &val,
        cfg,
        rng,
        |net, i, grad| {
            let tape = net.forward_recorded(&data[i].state)?;
            let mut loss = 0.0;
            let g: Vec<f64> = tape
                .output()
                .iter()
                .zip(&targets[i])
                .map(|(m, a)| {
                    let u = m.tanh();
                    loss += (u - a) * (u - a);
                    2.0 * (u - a) * (1.0 - u * u)
                })
                .collect();
            net.backward_into(&tape, &g, grad)?;
            Ok(loss)
        },
        |net, i| {
            Ok(net
                .forward(&data[i].state)?
                .iter()
                .zip(&targets[i])
                .map(|(m, a)| (m.tanh() - a).powi(2))
                .sum())
        },
    )?;
    *policy.mean_net_mut() = net;
    policy.set_log_std(BC_LOG_STD);
    Ok(Some(report))
}
