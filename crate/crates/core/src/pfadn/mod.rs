//! The PFADN network: three MConv blocks, a space-to-depth rearrangement,
//! an intensity branch ending in a stride-2 transposed convolution and an
//! angle branch predicting unit doubled-angle vectors.

mod infer;
mod model;
mod train;

pub use infer::{demosaic_full_frame, pad_preserving_parity, padded_extent};
pub use model::{
    angle_targets, pfadn_loss, BoundParams, ForwardVars, LossWeights, PfadnConfig, PfadnModel, TilePrediction,
    PAIR_EPS,
};
pub use train::{
    batch_gradient, load_training_samples, mean_loss, sample_loss, split_validation, train, write_metrics_csv,
    EpochMetrics, TrainConfig, TrainState, TrainingSample,
};
