//! Differentiable computation substrate: tensors, layer kernels with
//! hand-written backward passes, parameters and the Adam optimizer.

pub mod gradcheck;
pub mod layers;
pub mod ops;
pub mod params;
pub mod scalar;
pub mod tensor;

pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use layers::{Differentiable, Layer, LayerTrace, ParamSpec, Sequential};
pub use ops::{
    activation, concat_channels, conv2d, instance_norm, split_channels, upsample_conv, Activation, Filter,
};
pub use params::{adam_step, count_parameters, AdamConfig, Init, OptimState, Param, ParamSet};
pub use scalar::Scalar;
pub use tensor::{Shape4, Tensor4};
