use std::collections::BTreeSet;

use lightgan::datapipe::{synth_generate, NetImage, Preprocess, SynthConfig};
use lightgan::models::storage::TrainerKind;
use lightgan::models::{ChannelPolicy, GeneratorSpec};
use lightgan::training::checkpoint::list_checkpoints;
use lightgan::training::*;
use lightgan::Tensor4;

const SIZE: usize = 32;

fn small_config(trainer: TrainerKind, epochs: usize, interval: usize) -> TrainConfig {
    let mut spec = GeneratorSpec::new(ChannelPolicy::Fixed(4)).with_levels(3);
    spec.input_size = SIZE;
    TrainConfig {
        trainer,
        epochs,
        checkpoint_interval: interval,
        model: ModelChoice::Custom(spec),
        pool_size: 4,
        ..Default::default()
    }
}

fn pairs(n: usize, seed: u64) -> Vec<(NetImage, NetImage)> {
    let cfg = SynthConfig {
        n_samples: n,
        image_size: SIZE,
        seed,
        ..Default::default()
    };
    let pre = Preprocess {
        size: SIZE,
        ..Default::default()
    };
    synth_generate(&cfg)
        .unwrap()
        .into_iter()
        .map(|t| {
            (
                NetImage::new(t.id.clone(), pre.prepare(&t.confocal).unwrap()),
                NetImage::new(t.id.clone(), pre.prepare(&t.sted).unwrap()),
            )
        })
        .collect()
}

fn tensors(p: &[(NetImage, NetImage)]) -> Vec<(Tensor4, Tensor4)> {
    p.iter().map(|(a, b)| (a.tensor.clone(), b.tensor.clone())).collect()
}

#[test]
fn reinitialize_controls_initial_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(TrainerKind::Cyclegan, 1, 1);
    let ckpt = dir.path().join("checkpoints");
    std::fs::create_dir_all(&ckpt).unwrap();
    std::fs::write(ckpt.join("epoch_0005.ckpt"), b"stale").unwrap();
    std::fs::write(ckpt.join("epoch_0010.ckpt.tmp"), b"stale").unwrap();
    std::fs::write(dir.path().join("run.jsonl"), b"{}\n").unwrap();

    let a = initial_networks(&cfg, &reinitialize(Some(dir.path()), 3).unwrap()).unwrap();
    assert!(list_checkpoints(&ckpt).unwrap().is_empty());
    assert_eq!(std::fs::read_dir(&ckpt).unwrap().count(), 0);
    assert!(!dir.path().join("run.jsonl").exists());

    let b = initial_networks(&cfg, &reinitialize(None, 3).unwrap()).unwrap();
    assert_eq!(a, b);
    let c = initial_networks(&cfg, &reinitialize(None, 4).unwrap()).unwrap();
    assert_ne!(a["G"], c["G"]);
    assert_ne!(a["G"], a["F"], "networks draw from separate streams");
}

#[test]
fn pix2pix_steps_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let data = tensors(&pairs(2, 1));
    let cfg = small_config(TrainerKind::Pix2pix, 1, 1);
    let ctx = reinitialize(Some(dir.path()), 0).unwrap();
    let out = train_pix2pix(&data, &cfg, &ctx).unwrap();
    let e = &out.record.epochs[0];
    assert_eq!((e.steps, e.g_steps, e.d_steps), (2, 2, 2));
    let log = read_log(&ctx.log_path().unwrap()).unwrap();
    let steps = log.iter().filter(|r| matches!(r, LogRecord::Step { .. })).count();
    assert_eq!(steps, 2);
    assert_eq!(out.state.manifest.optimizer_steps["G"], 2);
    assert_eq!(out.state.manifest.optimizer_steps["D"], 2);

    let cfg = small_config(TrainerKind::Pix2pix, 10, 5);
    let ctx = reinitialize(Some(dir.path()), 0).unwrap();
    let out = train_pix2pix(&data, &cfg, &ctx).unwrap();
    let names: Vec<String> = list_checkpoints(&ctx.checkpoint_dir().unwrap())
        .unwrap()
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names, ["epoch_0005.ckpt", "epoch_0010.ckpt"]);
    assert_eq!(out.record.epochs.len(), 10);
    let saved = Checkpoint::load(&out.record.checkpoints[1]).unwrap();
    assert_eq!(saved, out.state);
    assert_eq!(saved.manifest.epoch, 10);
}

#[test]
fn logged_totals_match_weighted_components() {
    let data = pairs(3, 2);
    for trainer in [TrainerKind::Pix2pix, TrainerKind::Cyclegan] {
        let out = train_on_pairs(&data, &small_config(trainer, 2, 1), &RunContext::in_memory(1)).unwrap();
        for e in &out.record.epochs {
            assert_eq!(e.step_losses.len(), 3);
            for l in &e.step_losses {
                assert!(l.is_consistent(1e-6), "{l:?}");
            }
        }
    }
}

#[test]
fn training_is_deterministic() {
    let data = pairs(3, 3);
    for trainer in [TrainerKind::Pix2pix, TrainerKind::Cyclegan] {
        let cfg = small_config(trainer, 2, 2);
        let a = train_on_pairs(&data, &cfg, &RunContext::in_memory(9)).unwrap();
        let b = train_on_pairs(&data, &cfg, &RunContext::in_memory(9)).unwrap();
        assert_eq!(a.record.epoch_losses(), b.record.epoch_losses());
        assert_eq!(a.state.to_bytes().unwrap(), b.state.to_bytes().unwrap());
        let c = train_on_pairs(&data, &cfg, &RunContext::in_memory(10)).unwrap();
        assert_ne!(a.record.epoch_losses(), c.record.epoch_losses());
    }
}

#[test]
fn cyclegan_checkpoint_count() {
    let dir = tempfile::tempdir().unwrap();
    let data = pairs(2, 4);
    let cfg = small_config(TrainerKind::Cyclegan, 6, 2);
    let ctx = reinitialize(Some(dir.path()), 0).unwrap();
    let out = train_on_pairs(&data, &cfg, &ctx).unwrap();
    assert_eq!(list_checkpoints(&ctx.checkpoint_dir().unwrap()).unwrap().len(), 3);
    assert_eq!(out.record.checkpoints.len(), 3);
    assert_eq!(out.state.networks.keys().collect::<Vec<_>>(), ["DX", "DY", "F", "G"]);
}

#[test]
fn identity_loss_falls_on_identical_domains() {
    let data = pairs(4, 5);
    let same: Vec<Tensor4> = data.iter().map(|(_, b)| b.tensor.clone()).collect();
    let mut cfg = small_config(TrainerKind::Cyclegan, 10, 10);
    cfg.augment = false;
    let out = train_cyclegan(&same, &same, &cfg, &RunContext::in_memory(2)).unwrap();
    let id: Vec<f64> = out.record.epochs.iter().map(|e| e.losses.identity).collect();
    assert!(id[9] < id[0], "{id:?}");
}

#[test]
fn non_finite_input_aborts_with_context() {
    let mut data = tensors(&pairs(2, 6));
    data[1].0.data_mut()[5] = f32::NAN;
    let mut cfg = small_config(TrainerKind::Pix2pix, 1, 1);
    cfg.augment = false;
    let err = train_pix2pix(&data, &cfg, &RunContext::in_memory(0)).unwrap_err();
    match err {
        lightgan::Error::Training { epoch, .. } => assert_eq!(epoch, 1),
        other => panic!("unexpected error {other}"),
    }
}

#[test]
fn wrong_trainer_or_empty_data_is_rejected() {
    let cfg = small_config(TrainerKind::Cyclegan, 1, 1);
    assert!(train_pix2pix(&tensors(&pairs(1, 0)), &cfg, &RunContext::in_memory(0)).is_err());
    let cfg = small_config(TrainerKind::Pix2pix, 1, 1);
    assert!(train_pix2pix(&[], &cfg, &RunContext::in_memory(0)).is_err());
}

#[test]
fn cross_validation_covers_every_sample_once() {
    let dir = tempfile::tempdir().unwrap();
    let data = pairs(10, 7);
    let cfg = TrainConfig {
        folds: 5,
        seed: 21,
        ..small_config(TrainerKind::Pix2pix, 1, 1)
    };
    let cv = cross_validate(&data, &cfg, Some(dir.path())).unwrap();
    assert_eq!(cv.runs.len(), 5);
    let mut seen = BTreeSet::new();
    for (fold, run) in cv.runs.iter().enumerate() {
        let v = run.validation.as_ref().unwrap();
        assert_eq!(v.samples.len(), 2);
        assert_eq!(run.fold, Some(fold));
        assert_eq!(run.seed, 21 + fold as u64);
        for s in &v.samples {
            assert!(seen.insert(s.id.clone()));
        }
        assert!(dir.path().join(format!("fold_{fold}/run.json")).exists());
    }
    assert_eq!(seen.len(), 10);
    assert_eq!(cv.pooled.samples.len(), 10);
    assert!(dir.path().join("cv_report.csv").exists());

    let again = cross_validate(&data, &cfg, None).unwrap();
    assert_eq!(again.folds, cv.folds);
    for (a, b) in again.runs.iter().zip(&cv.runs) {
        assert_eq!(a.epochs[0].losses, b.epochs[0].losses);
    }

    // Fold 3 starts from a fresh reinitialization, not from fold 2's weights.
    let held: BTreeSet<&str> = cv.folds.validation(3).into_iter().collect();
    let train: Vec<_> = data.iter().filter(|(a, _)| !held.contains(a.id.as_str())).cloned().collect();
    let solo = train_on_pairs(&train, &cfg, &reinitialize(None, 24).unwrap()).unwrap();
    assert_eq!(solo.record.epochs[0].losses, cv.runs[3].epochs[0].losses);
}

#[test]
fn inference_is_batch_invariant() {
    let data = pairs(6, 8);
    let out = train_on_pairs(&data, &small_config(TrainerKind::Cyclegan, 1, 1), &RunContext::in_memory(0)).unwrap();
    let inputs: Vec<NetImage> = (0..64).map(|i| data[i % 6].0.clone()).collect();
    let one = infer(&out.state, &inputs, 1, Direction::Forward).unwrap();
    let all = infer(&out.state, &inputs, 64, Direction::Forward).unwrap();
    let odd = infer(&out.state, &inputs, 7, Direction::Forward).unwrap();
    assert_eq!(one, all);
    assert_eq!(one, odd);
    assert_eq!((one[0].width(), one[0].height()), (SIZE, SIZE));
    assert!(infer(&out.state, &inputs[..2], 1, Direction::Backward).is_ok());

    let big = pairs(1, 9);
    let pre = Preprocess {
        size: 64,
        ..Default::default()
    };
    let wrong = NetImage::new("big", pre.prepare(&big[0].0.prepared).unwrap());
    assert!(infer(&out.state, &[wrong], 1, Direction::Forward).is_err());
}

#[test]
fn pix2pix_has_no_backward_generator() {
    let data = pairs(2, 10);
    let out = train_on_pairs(&data, &small_config(TrainerKind::Pix2pix, 1, 1), &RunContext::in_memory(0)).unwrap();
    let inputs = [data[0].0.clone()];
    assert!(infer(&out.state, &inputs, 1, Direction::Backward).is_err());
}

#[test]
fn timing_table_shape() {
    let dir = tempfile::tempdir().unwrap();
    let data = pairs(3, 11);
    let ctx = reinitialize(Some(dir.path()), 0).unwrap();
    let out = train_on_pairs(&data, &small_config(TrainerKind::Pix2pix, 1, 1), &ctx).unwrap();
    let images: Vec<NetImage> = data.iter().map(|(a, _)| a.clone()).collect();
    let rows = time_inference(&out.record.checkpoints[0], &images, &[1, 4, 8], 3, Direction::Forward).unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows.iter().map(|r| r.count).collect::<Vec<_>>(), [1, 4, 8]);
    assert!(rows.iter().all(|r| r.repetitions == 3 && r.seconds_per_image.mean > 0.0 && r.seconds_per_image.std >= 0.0));
    assert!(time_inference(&out.record.checkpoints[0], &images, &[4, 4], 1, Direction::Forward).is_err());
}

#[test]
fn diagnostic_contracts() {
    let data = pairs(4, 12);
    let out = train_on_pairs(&data, &small_config(TrainerKind::Pix2pix, 1, 1), &RunContext::in_memory(0)).unwrap();
    let confocal: Vec<NetImage> = data.iter().map(|(a, _)| a.clone()).collect();
    let generated = infer(&out.state, &confocal, 4, Direction::Forward).unwrap();
    let same: Vec<NetImage> = confocal.iter().zip(&generated).map(|(c, g)| NetImage::new(c.id.clone(), g.clone())).collect();

    let r = diagnose_quality(&out.state, &confocal, &same, Some(0.99), None).unwrap();
    for s in &r.samples {
        assert_eq!(s.ssim, 1.0);
        assert!(!s.flagged);
        assert!(s.difference.as_ref().unwrap().pixels().iter().all(|&p| p == 0));
    }

    let sted: Vec<NetImage> = data.iter().map(|(_, b)| b.clone()).collect();
    let r = diagnose_quality(&out.state, &confocal, &sted, None, Some(&data)).unwrap();
    let cal = r.calibration.as_ref().unwrap();
    assert!((r.tau - (cal.mean - 2.0 * cal.std)).abs() < 1e-12);
    for s in &r.samples {
        assert!(s.difference.as_ref().unwrap().pixels().iter().any(|&p| p != 0));
    }

    assert!(diagnose_quality(&out.state, &confocal, &sted, None, None).is_err());
    assert!(diagnose_quality(&out.state, &confocal[..2], &sted, Some(0.5), None).is_err());
}
