//! A small reverse-mode automatic differentiation engine for HWC image
//! tensors, with the convolution, resampling and loss operations the
//! networks in this crate need.

mod gradcheck;
mod graph;
mod kernels;
mod optim;
mod ssim;
mod tensor;

pub use gradcheck::{check_gradients, GradCheckReport};
pub use graph::{Gradients, Graph, Padding, TileMask, Var};
pub use optim::{glorot_uniform, Adam, AdamConfig, ParamSet};
pub use ssim::{gaussian_taps, ssim_value, SSIM_SIGMA, SSIM_WINDOW};
pub use tensor::{Real, Tensor};
