//! Image I/O, preprocessing (contrast stretch, registration, padding,
//! normalization, augmentation), Richardson-Lucy deconvolution, fold
//! assignment and the synthetic paired-data generator.

pub mod dataset;
pub mod deconv;
pub mod folds;
pub mod image;
pub mod preprocess;
pub mod synth;

pub use dataset::{load_dataset, load_domain, prepare_images, prepare_pairs, Dataset, NetImage, PairingMode, Sample};
pub use deconv::{rl_deconvolve, rl_deconvolve_plane, Psf};
pub use folds::{make_folds, FoldAssignment};
pub use image::{read_png, write_png, Plane, RawImage};
pub use preprocess::{
    augment, contrast_stretch, denormalize, normalize_to_net, pad_to_square, register_translation, shift_image,
    Dihedral, NormRange, Preprocess,
};
pub use synth::{synth_generate, two_line_phantom, Degrade, Quality, SampleTriplet, SynthConfig};
