#![allow(dead_code)]

use musbo::numerics::{
    l2_next_state_grad, l2_next_state_loss, pnn_nll_grad, pnn_nll_loss, GaussianHead, ParamNet,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Loss {
    L2,
    Nll,
}

fn loss_value(net: &ParamNet, loss: Loss, x: &[f64], target: &[f64]) -> f64 {
    let out = net.forward(x).unwrap();
    match loss {
        Loss::L2 => l2_next_state_loss(&out, target).unwrap(),
        Loss::Nll => pnn_nll_loss(&GaussianHead::from_output(&out).unwrap(), target).unwrap(),
    }
}

/// Largest relative error between backprop and central differences over
/// all parameters of a random network drawn from `seed`.
pub fn max_gradient_error(seed: u64, loss: Loss) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d_in = rng.random_range(1..5);
    let d_out = rng.random_range(1..4);
    let hidden: Vec<usize> = (0..rng.random_range(1..3)).map(|_| rng.random_range(2..9)).collect();
    let head = if loss == Loss::Nll { 2 * d_out } else { d_out };
    let mut sizes = vec![d_in];
    sizes.extend(&hidden);
    sizes.push(head);
    let mut net = ParamNet::new(&sizes, &mut rng).unwrap();
    let x: Vec<f64> = (0..d_in).map(|_| rng.random_range(-1.0..1.0)).collect();
    let target: Vec<f64> = (0..d_out).map(|_| rng.random_range(-1.0..1.0)).collect();

    let tape = net.forward_recorded(&x).unwrap();
    let out_grad = match loss {
        Loss::L2 => l2_next_state_grad(tape.output(), &target).unwrap(),
        Loss::Nll => pnn_nll_grad(tape.output(), &target).unwrap().1,
    };
    let analytic = net.backward(&tape, &out_grad).unwrap();

    let h = 1e-6;
    let base = net.params().to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] = base[i] + h;
        net.set_params(&p).unwrap();
        let up = loss_value(&net, loss, &x, &target);
        p[i] = base[i] - h;
        net.set_params(&p).unwrap();
        let down = loss_value(&net, loss, &x, &target);
        let numeric = (up - down) / (2.0 * h);
        let scale = analytic[i].abs().max(numeric.abs()).max(1e-4);
        worst = worst.max((analytic[i] - numeric).abs() / scale);
    }
    net.set_params(&base).unwrap();
    worst
}
