//! Desk-scale learnable parts: per-pixel color experts (small MLPs standing
//! in for stacks of 1x1 convolutions), the no-info baseline, and the
//! pixel-wise late-fusion gate over two experts' softmax fields.

mod fusion;
mod mlp;
mod model_io;

pub use fusion::{
    field_from_labels, fuse_predict, random_field, train_fusion, uniform_field, FusionModel,
    FusionTask, FUSION_INIT_SCALE,
};
pub use mlp::{
    adam_step, argmax, forward, init_mlp, loss_and_grad, no_info_baseline, predict_dense,
    softmax, train_color_expert, AdamState, Gradients, LrSchedule, MlpModel, MlpSpec,
    SoftmaxField, TrainConfig, TrainLog,
};
pub use model_io::{
    load_model, load_softmax_stack, save_model, save_softmax_stack, stack_paths,
};
