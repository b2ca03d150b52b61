//! Lightweight U-Net GANs for confocal to STED style modality transfer in
//! fluorescence microscopy.
//!
//! The crate is organised bottom-up:
//!
//! * [`compute`]: tensors, layer kernels with backward passes, Adam.
//! * [`models`]: the U-Net generator family and the PatchGAN discriminator.
//! * [`losses`]: adversarial, L1, cycle-consistency and identity objectives.
//! * [`datapipe`]: image I/O, preprocessing, augmentation, folds, synthetic data.
//! * [`metrics`]: MSE, PSNR, SSIM, line profiles, Pearson correlation.
//! * [`training`]: Pix2Pix and CycleGAN loops, cross-validation, checkpoints,
//!   inference timing and the experimental-quality diagnostic.
//! * [`config`]: the key-value run configuration shared with the CLI.

pub mod compute;
pub mod config;
pub mod datapipe;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod models;
pub mod training;

pub use compute::{Shape4, Tensor4};
pub use error::{Error, Result};
