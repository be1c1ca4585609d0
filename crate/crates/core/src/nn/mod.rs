//! Recurrent sequence model, its gradients and parameter-space divergences.

pub mod gradcheck;
pub mod head;
pub mod kl;
pub mod lstm;
pub mod params;

pub use kl::{head_divergence, kl_divergence, model_divergence, param_distribution};
pub use lstm::{
    apply_head, backward, embed, forward, loss_and_gradient, mse_loss, objective, ForwardOutput, TrainBatch,
};
pub use params::{Dims, GradientSet, ParamSet};
