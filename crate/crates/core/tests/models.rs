//! Fitting behaviour of the dynamics ensemble and the labeler on synthetic data.

use musbo::dynamics_model::DynamicsEnsemble;
use musbo::environments::Env;
use musbo::explorer::Transition;
use musbo::numerics::FitConfig;
use musbo::uncertainty::LabelerEnsemble;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `s' = s + a` on a 1-D state.
fn additive_data(n: usize, seed: u64) -> Vec<Transition> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let s: f64 = rng.random_range(-1.0..1.0);
            let a: f64 = rng.random_range(-0.5..0.5);
            Transition {
                state: vec![s],
                action: vec![a],
                reward: 0.0,
                next_state: vec![s + a],
                done: false,
            }
        })
        .collect()
}

fn fit_additive(data: &[Transition], seed: u64) -> (DynamicsEnsemble, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ens = DynamicsEnsemble::new(1, 1, &[32, 32], 3, &mut rng).unwrap();
    let report = ens.fit(data, &FitConfig::default(), &mut rng).unwrap();
    let losses = report.members.iter().map(|m| m.val_loss).collect();
    (ens, losses)
}

#[test]
fn additive_system_is_learned() {
    let data = additive_data(1000, 0);
    let (ens, losses) = fit_additive(&data, 1);
    for l in &losses {
        assert!(*l < 1e-3, "validation MSE {l}");
    }
    for j in 0..ens.len() {
        let p = ens.predict(j, &[0.0], &[0.1]).unwrap();
        assert!((p[0] - 0.1).abs() < 0.02, "member {j}: {p:?}");
    }
}

#[test]
fn duplicated_data_fits_comparably() {
    let data = additive_data(500, 2);
    let doubled: Vec<Transition> = data.iter().chain(&data).cloned().collect();
    let (_, base) = fit_additive(&data, 3);
    let (_, dup) = fit_additive(&doubled, 3);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (b, d) = (mean(&base), mean(&dup));
    // Duplicates double the Adam steps per epoch, so the fit can only get
    // tighter; the check is that it does not degrade past 2x.
    assert!(d <= 2.0 * b, "original {b}, duplicated {d}");
}

#[test]
fn labeler_trusts_supported_region_more() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    // Clustered 2-D data with smooth dynamics.
    let data: Vec<Transition> = (0..1500)
        .map(|_| {
            let s: [f64; 2] = [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)];
            let a: f64 = rng.random_range(-0.5..0.5);
            let next = vec![s[0] + 0.1 * s[1], s[1] + 0.1 * (a - s[0].sin())];
            Transition {
                state: s.to_vec(),
                action: vec![a],
                reward: 0.0,
                next_state: next,
                done: false,
            }
        })
        .collect();
    let mut labeler = LabelerEnsemble::new(2, 1, &[32, 32], 3, 0.028, &mut rng).unwrap();
    labeler.fit(&data, &FitConfig::default(), &mut rng).unwrap();

    // The state range is 1, so +5 sigma of it moves well outside the data.
    let std = (1.0f64 / 12.0).sqrt();
    let mut inside = 0.0;
    let mut outside = 0.0;
    for t in data.iter().take(200) {
        inside += labeler.label(&t.state, &t.action, &mut rng).unwrap();
        let far: Vec<f64> = t.state.iter().map(|s| s + 5.0 * std).collect();
        outside += labeler.label(&far, &t.action, &mut rng).unwrap();
    }
    assert!(inside > outside, "inside {inside}, outside {outside}");
}

#[test]
fn pendulum_reset_mean_matches_initial_distribution() {
    let env = Env::by_name("pendulum").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 10_000;
    let draws: Vec<Vec<f64>> = (0..n).map(|_| env.reset(&mut rng)).collect();
    let mu0 = env.initial_mean();
    for d in 0..mu0.len() {
        let xs: Vec<f64> = draws.iter().map(|s| s[d]).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - mu0[d]).abs() <= 3.0 * se, "dim {d}: mean {mean}, se {se}");
    }
}
