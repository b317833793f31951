//! From-scratch U-Net regression engine: layer primitives with exact
//! gradients, the encoder/decoder assembly, Nadam optimization, the
//! training loop and checkpointing.

pub mod checkpoint;
pub mod layers;
pub mod nadam;
pub mod train;
pub mod unet;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use nadam::{nadam_step, NadamHyper};
pub use train::{
    evaluate_loss, train, train_epoch_range, write_history_csv, EpochStats, MemorySet,
    TrainConfig, TrainingSet,
};
pub use unet::{
    backward, build_unet, forward_cached, infer, ConvParam, ForwardCache, OptimizerState,
    UNetConfig, UNetModel,
};
