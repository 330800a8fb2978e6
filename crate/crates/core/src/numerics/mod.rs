//! Small feed-forward networks with exact reverse-mode gradients, Adam, and
//! the two regression losses used by the dynamics and labeler ensembles.

mod fit;
mod loss;
mod net;

pub use fit::{bootstrap, split_indices, train_early_stopping, FitConfig, TrainReport};

pub use loss::{
    l2_next_state_grad, l2_next_state_loss, pnn_nll_grad, pnn_nll_loss, GaussianHead,
    LOG_VAR_MAX, LOG_VAR_MIN,
};
pub use net::{AdamState, ParamNet, Tape, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
