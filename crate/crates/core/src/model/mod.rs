//! Point-set segmentation network: configuration, parameters, passes,
//! training and chunked inference.

pub mod config;
pub mod group;
pub mod network;
pub mod params;
pub mod predict;
pub mod train;

pub use config::{LevelConfig, ModelConfig, Optimizer, ScaleConfig, TrainConfig};
pub use network::{
    argmax_labels, backward, forward, forward_with_plan, loss, loss_and_grad, loss_and_gradient,
    plan_sampling, SamplingPlan,
};
pub use params::{load_checkpoint, save_checkpoint, ModelParams, Tensor};
pub use predict::{predict, predict_chunk};
pub use train::{prepare_training_chunks, train, TrainReport};
