//! Fully-convolutional EDM-to-EDM regressor with exact gradients.

mod fconv;
mod file;
mod layers;
mod stack;
mod train;

pub use fconv::{
    asymmetry, grad_check, loss_and_grad, net_init, recover_with_net, symmetrize_and_clamp, GradReport, NetConfig,
    NetRecovery, NetworkParams, LAYER_NAMES,
};
pub use file::{ModelFile, ModelRole, MODEL_FORMAT, MODEL_FORMAT_VERSION};
pub use stack::{stack_finetune, StackInput, StackedNet};
pub use train::{curve_csv, evaluate_loss, train, CurvePoint, Example, Model, TrainConfig};
