//! Deletion operators, their training losses, the unlearning loop and baselines.

mod baselines;
mod losses;
mod operator;
mod trainer;

pub use baselines::{baseline_grad_ascent, baseline_noisy_finetune, baseline_retrain};
pub use losses::{dec_loss, dec_loss_on_tape, ni_loss, ni_loss_on_tape, ni_node_ids};
pub use operator::{
    active_layers, build_masks, del_forward, del_forward_on_tape, masks_around, unlearned_forward,
    unlearned_forward_with, Activation, DeletionOperator, OperatorMode, UnlearnedModel,
};
pub use trainer::{
    sequential_unlearn, unlearn, unlearn_node_features, unlearn_nodes, LayerLosses, LossReport, UnlearnConfig,
};
