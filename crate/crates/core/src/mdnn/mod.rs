//! Multi-label convolutional network: five conv+pool feature modules, global
//! average pooling, a small dense stack and a per-label sigmoid head.

pub mod checkpoint;
mod gemm;
pub mod layers;
pub mod model;
pub mod tensor;
pub mod train;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use layers::{Layer, Param};
pub use model::{build_model, Model, ModelConfig, N_MODULES};
pub use tensor::Tensor;
pub use train::{
    batch_tensors, bce_loss, dataset_loss, fit, predict_labels, score_images, train_step, EpochRecord, Prediction, StopReason, TrainConfig,
    TrainReport,
};
