//! Generator and discriminator architectures, the nine presets, and
//! parameter / storage accounting.

pub mod discriminator;
pub mod generator;
pub mod spec;
pub mod storage;

pub use crate::compute::params::count_parameters;
pub use discriminator::{build_discriminator, discriminator_network, patch_map_size};
pub use generator::{build_generator, Generator};
pub use spec::{ChannelPolicy, DiscriminatorSpec, GeneratorSpec, NormKind, Preset};
pub use storage::{estimate_storage, snapshot_bytes, StorageEstimate, TrainerKind};

/// Parameter count of a generator spec without allocating its weights.
pub fn generator_parameter_count(spec: &GeneratorSpec) -> crate::Result<usize> {
    Ok(Generator::new(*spec)?.param_specs().iter().map(|p| p.len()).sum())
}

/// Parameter count of a discriminator spec without allocating its weights.
pub fn discriminator_parameter_count(spec: &DiscriminatorSpec) -> crate::Result<usize> {
    Ok(discriminator_network(spec)?.params().iter().map(|p| p.len()).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compute::layers::{Differentiable, Layer, Sequential};
    use crate::compute::tensor::{Shape4, Tensor4};
    use crate::compute::{grad_check, GradCheckOptions};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(shape: Shape4, seed: u64) -> Tensor4 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor4::from_fn(shape, |_, _, _, _| rng.gen_range(-1.0..1.0)).unwrap()
    }

    #[test]
    fn small_conv_count() {
        let net = Sequential::new(vec![Layer::Conv {
            name: "c".into(),
            cin: 1,
            cout: 8,
            k: 3,
            stride: 1,
            padding: 1,
            bias: true,
        }]);
        assert_eq!(count_parameters(&net.init_params(0).unwrap()), 80);
    }

    #[test]
    fn fixed8_shape_and_range() {
        let spec = GeneratorSpec::new(ChannelPolicy::Fixed(8)).with_levels(4);
        let (g, p) = build_generator(spec, 3).unwrap();
        let y = g.forward(&p, &noise(Shape4::new(1, 1, 128, 128), 1)).unwrap();
        assert_eq!(y.shape(), Shape4::new(1, 1, 128, 128));
        assert!(y.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        assert!(g.forward(&p, &noise(Shape4::new(1, 1, 64, 64), 1)).is_err());
    }

    #[test]
    fn same_seed_same_params() {
        let spec = Preset::new(9).unwrap().generator();
        assert_eq!(build_generator(spec, 5).unwrap().1, build_generator(spec, 5).unwrap().1);
        assert_ne!(build_generator(spec, 5).unwrap().1, build_generator(spec, 6).unwrap().1);
        let d = DiscriminatorSpec::coupled(&spec, 1);
        assert_eq!(build_discriminator(&d, 2).unwrap().1, build_discriminator(&d, 2).unwrap().1);
    }

    #[test]
    fn allocated_count_matches_declared() {
        let spec = Preset::new(9).unwrap().generator();
        let (_, p) = build_generator(spec, 0).unwrap();
        assert_eq!(count_parameters(&p), generator_parameter_count(&spec).unwrap());
    }

    #[test]
    fn patch_map_is_spatial() {
        let d = DiscriminatorSpec::coupled(&Preset::new(9).unwrap().generator(), 1);
        assert_eq!(patch_map_size(&d, 128), Some(14));
        let (net, p) = build_discriminator(&d, 0).unwrap();
        let y = net.forward(&p, &noise(Shape4::new(1, 1, 128, 128), 2)).unwrap();
        assert_eq!(y.shape(), Shape4::new(1, 1, 14, 14));
    }

    #[test]
    fn zero_head_gives_zero_logits() {
        let d = DiscriminatorSpec::coupled(&Preset::new(8).unwrap().generator(), 1);
        let (net, mut p) = build_discriminator(&d, 0).unwrap();
        p.get_mut("head.conv.weight").unwrap().value.fill(0.0);
        let x = Tensor4::filled(Shape4::new(1, 1, 128, 128), 0.3).unwrap();
        assert!(net.forward(&p, &x).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn skip_connections_carry_encoder_features() {
        let spec = GeneratorSpec::new(ChannelPolicy::Fixed(4)).with_levels(4);
        let (g, mut p) = build_generator(spec, 1).unwrap();
        // Cut the bottleneck path: the innermost decoder block outputs zeros.
        p.get_mut("up2.conv.weight").unwrap().value.fill(0.0);
        p.get_mut("up2.norm.gain").unwrap().value.fill(0.0);
        let y = g.forward(&p, &noise(Shape4::new(1, 1, 128, 128), 3)).unwrap();
        let first = y.data()[0];
        assert!(y.data().iter().any(|&v| (v - first).abs() > 1e-6));
    }

    #[test]
    fn generator_gradients() {
        let mut spec = GeneratorSpec::new(ChannelPolicy::Doubling(2)).with_levels(3);
        spec.input_size = 8;
        let (g, p) = build_generator(spec, 4).unwrap();
        let x = noise(Shape4::new(1, 1, 8, 8), 5).map(|v| v as f64);
        let opts = GradCheckOptions {
            projection_seed: Some(9),
            ..Default::default()
        };
        let r = grad_check(&g, &p.cast::<f64>(), &x, &opts).unwrap();
        assert!(r.max_relative_error < 1e-3, "{r:?}");
        assert!(r.checked > r.skipped);
    }

    #[test]
    fn discriminator_gradients() {
        let d = DiscriminatorSpec {
            base_channels: 2,
            fixed: false,
            in_channels: 2,
            layers: 2,
            kernel: 4,
            norm: NormKind::Instance,
        };
        let (net, p) = build_discriminator(&d, 6).unwrap();
        let x = noise(Shape4::new(1, 2, 16, 16), 7).map(|v| v as f64);
        let opts = GradCheckOptions {
            projection_seed: Some(3),
            ..Default::default()
        };
        let r = grad_check(&net, &p.cast::<f64>(), &x, &opts).unwrap();
        assert!(r.max_relative_error < 1e-3, "{r:?}");
    }

    #[test]
    fn storage_schedule() {
        let g = Preset::new(9).unwrap().generator();
        let d = DiscriminatorSpec::coupled(&g, 1);
        let s = estimate_storage(&g, &d, TrainerKind::Cyclegan, 200, 5).unwrap();
        assert_eq!(s.checkpoints, 40);
        assert_eq!(s.total_bytes, 40 * s.bytes_per_checkpoint);
        assert!(estimate_storage(&g, &d, TrainerKind::Cyclegan, 200, 7).is_err());
        let p = estimate_storage(&g, &d, TrainerKind::Pix2pix, 200, 5).unwrap();
        assert!(p.bytes_per_checkpoint < s.bytes_per_checkpoint);
        assert_eq!(snapshot_bytes(9000), 36_000);
    }
}
