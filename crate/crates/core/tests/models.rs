use lightgan::compute::{grad_check, Differentiable, GradCheckOptions, Shape4, Tensor4};
use lightgan::models::{
    build_discriminator, build_generator, discriminator_parameter_count, estimate_storage, generator_parameter_count,
    patch_map_size, ChannelPolicy, DiscriminatorSpec, GeneratorSpec, Preset, TrainerKind,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Counted independently from the layer table: stem conv, 7 stride-2 encoder
// convs, 7 upsample-convs over concatenated skips, 1x1 tanh head, with
// instance-norm affine pairs on every normalized conv and biases only where
// no norm follows.
const GOLDEN: [(u8, usize); 9] = [
    (1, 30_609_281),
    (2, 7_655_361),
    (3, 1_915_361),
    (4, 479_601),
    (5, 740_801),
    (6, 120_281),
    (7, 186_081),
    (8, 46_961),
    (9, 11_961),
];

#[test]
fn preset_parameter_counts() {
    for (i, expected) in GOLDEN {
        let spec = Preset::new(i).unwrap().generator();
        assert_eq!(generator_parameter_count(&spec).unwrap(), expected, "model{i}");
        let (_, params) = build_generator(spec, 0).unwrap();
        assert_eq!(lightgan::models::count_parameters(&params), expected, "model{i} built");
    }
}

#[test]
fn discriminator_counts() {
    let d = DiscriminatorSpec::coupled(&GeneratorSpec::new(ChannelPolicy::Doubling(64)), 1);
    assert_eq!(discriminator_parameter_count(&d).unwrap(), 2_763_585);
    let d = DiscriminatorSpec::coupled(&Preset::new(9).unwrap().generator(), 2);
    assert_eq!(discriminator_parameter_count(&d).unwrap(), 3_513);
    assert_eq!(patch_map_size(&d, 128), Some(14));
}

#[test]
fn generator_preserves_shape() {
    for p in [Preset::new(6).unwrap(), Preset::new(9).unwrap()] {
        let (g, params) = build_generator(p.generator(), 1).unwrap();
        let x = Tensor4::<f32>::filled(Shape4::new(2, 1, 128, 128), 0.3).unwrap();
        let y = g.forward(&params, &x).unwrap();
        assert_eq!(y.shape(), x.shape());
        assert!(y.data().iter().all(|v| v.abs() <= 1.0));
    }
}

#[test]
fn storage_schedule() {
    let g = Preset::new(9).unwrap().generator();
    let d = DiscriminatorSpec::coupled(&g, 1);
    let s = estimate_storage(&g, &d, TrainerKind::Cyclegan, 200, 5).unwrap();
    assert_eq!(s.checkpoints, 40);
    assert_eq!(s.total_bytes, 40 * s.bytes_per_checkpoint);
    let p = estimate_storage(&g, &DiscriminatorSpec::coupled(&g, 2), TrainerKind::Pix2pix, 200, 5).unwrap();
    assert!(p.bytes_per_checkpoint < s.bytes_per_checkpoint);
    assert!(estimate_storage(&g, &d, TrainerKind::Cyclegan, 200, 7).is_err());
}

fn random(shape: Shape4, seed: u64) -> Tensor4<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor4::from_fn(shape, |_, _, _, _| rng.gen_range(-1.0..1.0)).unwrap()
}

#[test]
fn small_unet_gradients() {
    let spec = GeneratorSpec {
        input_size: 8,
        ..GeneratorSpec::new(ChannelPolicy::Doubling(2)).with_levels(3)
    };
    let (g, params) = build_generator(spec, 5).unwrap();
    let params = params.cast::<f64>();
    let x = random(Shape4::new(1, 1, 8, 8), 6);
    let opts = GradCheckOptions {
        projection_seed: Some(7),
        ..Default::default()
    };
    let r = grad_check(&g, &params, &x, &opts).unwrap();
    assert!(r.max_relative_error < 1e-3, "{r:?}");
    assert!(r.checked > r.skipped);
}

#[test]
fn small_patchgan_gradients() {
    let spec = DiscriminatorSpec {
        base_channels: 2,
        fixed: false,
        in_channels: 2,
        layers: 2,
        kernel: 4,
        norm: lightgan::models::NormKind::Instance,
    };
    let (d, params) = build_discriminator(&spec, 8).unwrap();
    let x = random(Shape4::new(1, 2, 16, 16), 9);
    let opts = GradCheckOptions {
        projection_seed: Some(10),
        ..Default::default()
    };
    let r = grad_check(&d, &params.cast::<f64>(), &x, &opts).unwrap();
    assert!(r.max_relative_error < 1e-3, "{r:?}");
}

#[test]
fn single_and_double_precision_agree() {
    let spec = GeneratorSpec {
        input_size: 32,
        ..GeneratorSpec::new(ChannelPolicy::Fixed(4)).with_levels(4)
    };
    let (g, params) = build_generator(spec, 11).unwrap();
    let x64 = random(Shape4::new(1, 1, 32, 32), 12);
    let x32 = Tensor4::from_vec(x64.shape(), x64.data().iter().map(|&v| v as f32).collect()).unwrap();
    let a = g.forward(&params, &x32).unwrap();
    let b = g.forward(&params.cast::<f64>(), &x64).unwrap();
    let worst = a.data().iter().zip(b.data()).map(|(&p, &q)| (p as f64 - q).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-4, "{worst}");
}
