use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use lightgan::config::CliConfig;
use lightgan::datapipe::{
    load_dataset, load_domain, prepare_images, prepare_pairs, synth_generate, write_png, Dataset, NetImage,
    PairingMode, Sample,
};
use lightgan::datapipe::synth::write_dataset;
use lightgan::metrics::{evaluate_pairset, Labeled, MetricReport};
use lightgan::models::{estimate_storage, generator_parameter_count, discriminator_parameter_count, Preset, TrainerKind};
use lightgan::training::{
    cross_validate, diagnose_quality, evaluate_generator, infer, reinitialize, time_inference, train_cyclegan, train_on_pairs,
    Checkpoint, Direction, ModelChoice,
};

use crate::table::{fixed, Table};
use crate::{usage, Cli, Command, DataArgs, TrainFlags};

pub fn run(cli: Cli, mut cfg: CliConfig) -> Result<()> {
    apply_overrides(&cli.command, &mut cfg)?;
    if let Some(seed) = cli.global.seed {
        cfg.set_seed(seed);
    }
    cfg.validate()?;
    if cli.global.dump_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    match cli.command {
        Command::Synth(a) => synth(&cfg, required(a.out, "--out")?),
        Command::Preprocess(a) => preprocess(&cfg, required(a.out, "--out")?),
        Command::Train(a) => train(&cfg, required(a.out, "--out")?, a.cv),
        Command::Eval(a) => eval(&cfg, a.generated, a.checkpoint, a.baseline, required(a.out, "--out")?),
        Command::Sweep(a) => sweep(&cfg, &a.presets, required(a.out, "--out")?),
        Command::Params(a) => params(&cfg, a.csv, a.out),
        Command::Diagnose(a) => diagnose(&cfg, &a.checkpoint, a.experimental, a.tau, a.validation, a.out),
        Command::Time(a) => time(&cfg, &a.checkpoint, &a.counts, a.reps, a.direction, a.self_test, a.out),
    }
}

fn required(v: Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    v.ok_or_else(|| usage(format!("{flag} is required")))
}

fn apply_data(d: &DataArgs, cfg: &mut CliConfig) {
    if let Some(v) = &d.data {
        cfg.data.root = Some(v.clone());
    }
    if let Some(v) = &d.source {
        cfg.data.source = v.clone();
    }
    if let Some(v) = &d.target {
        cfg.data.target = v.clone();
    }
    if let Some(v) = d.pairing {
        cfg.data.pairing = v;
    }
    if let Some(v) = d.radius {
        cfg.data.registration_radius = v;
    }
}

fn apply_train(t: &TrainFlags, cfg: &mut CliConfig) {
    let c = &mut cfg.train;
    if let Some(v) = t.trainer {
        c.trainer = v;
    }
    if let Some(v) = t.model {
        c.model = v;
    }
    if let Some(v) = t.epochs {
        c.epochs = v;
        if t.interval.is_none() && v % c.checkpoint_interval != 0 {
            c.checkpoint_interval = v;
        }
    }
    if let Some(v) = t.interval {
        c.checkpoint_interval = v;
    }
    if let Some(v) = t.disc_base {
        c.discriminator_base = Some(v);
    }
    if let Some(v) = t.batch_size {
        c.batch_size = v;
    }
    if let Some(v) = t.lr {
        c.lr = v;
    }
    if let Some(v) = t.pool_size {
        c.pool_size = v;
    }
    c.augment &= !t.no_augment;
    c.lsgan |= t.lsgan;
    c.literal_minimax |= t.literal_minimax;
    c.lr_decay |= t.lr_decay;
    if let Some(v) = t.test_count {
        cfg.data.test_count = v;
    }
}

fn apply_overrides(cmd: &Command, cfg: &mut CliConfig) -> Result<()> {
    match cmd {
        Command::Synth(a) => {
            let s = &mut cfg.synth;
            s.n_samples = a.n.unwrap_or(s.n_samples);
            s.image_size = a.size.unwrap_or(s.image_size);
            s.degrade = a.degrade.unwrap_or(s.degrade);
            s.low_quality_fraction = a.low_quality_fraction.unwrap_or(s.low_quality_fraction);
            s.psf_sigma_confocal = a.psf_confocal.unwrap_or(s.psf_sigma_confocal);
            s.psf_sigma_sted = a.psf_sted.unwrap_or(s.psf_sigma_sted);
            s.noise_level = a.noise.unwrap_or(s.noise_level);
            s.bit_depth = a.bit_depth.unwrap_or(s.bit_depth);
        }
        Command::Preprocess(a) => apply_data(&a.data, cfg),
        Command::Train(a) => {
            apply_data(&a.data, cfg);
            apply_train(&a.train, cfg);
            if let Some(k) = a.cv {
                cfg.train.folds = k;
            }
        }
        Command::Eval(a) => apply_data(&a.data, cfg),
        Command::Sweep(a) => {
            apply_data(&a.data, cfg);
            apply_train(&a.train, cfg);
        }
        Command::Params(a) => {
            if let Some(v) = a.trainer {
                cfg.train.trainer = v;
            }
            if let Some(v) = a.epochs {
                cfg.train.epochs = v;
            }
            if let Some(v) = a.interval {
                cfg.train.checkpoint_interval = v;
            }
        }
        Command::Diagnose(a) => apply_data(&a.data, cfg),
        Command::Time(a) => apply_data(&a.data, cfg),
    }
    Ok(())
}

fn data_root(cfg: &CliConfig) -> Result<&Path> {
    cfg.data
        .root
        .as_deref()
        .ok_or_else(|| usage("a dataset is required (--data or data.root)"))
}

fn ensure_distinct(input: &Path, out: &Path) -> Result<()> {
    let same = match (input.canonicalize(), out.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    };
    if same {
        return Err(usage("--out must differ from the input dataset"));
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn synth(cfg: &CliConfig, out: PathBuf) -> Result<()> {
    let samples = synth_generate(&cfg.synth)?;
    write_dataset(&out, &samples, &cfg.synth)?;
    println!("wrote {} samples to {}", samples.len(), out.display());
    Ok(())
}

/// Prepared pairs from the configured source and target domains.
fn load_pairs(cfg: &CliConfig) -> Result<Vec<(NetImage, NetImage)>> {
    let root = data_root(cfg)?;
    let d = &cfg.data;
    match load_dataset(root, &d.source, &d.target, PairingMode::Paired)? {
        Dataset::Paired(p) => Ok(prepare_pairs(&p, &cfg.preprocess, d.registration_radius, d.mi_bins)?),
        Dataset::Unpaired { .. } => unreachable!("paired mode requested"),
    }
}

fn preprocess(cfg: &CliConfig, out: PathBuf) -> Result<()> {
    let root = data_root(cfg)?;
    ensure_distinct(root, &out)?;
    let d = &cfg.data;
    let (a, b): (Vec<NetImage>, Vec<NetImage>) = match d.pairing {
        PairingMode::Paired => {
            let pairs = load_pairs(cfg)?;
            pairs.into_iter().unzip()
        }
        PairingMode::Unpaired => (
            prepare_images(&load_domain(&root.join(&d.source))?, &cfg.preprocess)?,
            prepare_images(&load_domain(&root.join(&d.target))?, &cfg.preprocess)?,
        ),
    };
    for (domain, images) in [(&d.source, &a), (&d.target, &b)] {
        let dir = out.join(domain);
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        for img in images {
            write_png(&dir.join(format!("{}.png", img.id)), &img.prepared)?;
        }
    }
    println!("prepared {} + {} images into {}", a.len(), b.len(), out.display());
    Ok(())
}

fn split_test<T: Clone>(items: &[T], test_count: usize) -> Result<(Vec<T>, Vec<T>)> {
    if test_count >= items.len() {
        return Err(usage(format!(
            "test split of {test_count} leaves no training data out of {} samples",
            items.len()
        )));
    }
    let cut = items.len() - test_count;
    Ok((items[..cut].to_vec(), items[cut..].to_vec()))
}

fn print_report(title: &str, r: &MetricReport) {
    let a = &r.aggregate;
    println!(
        "{title}: n={} ssim {:.4} ± {:.4}, psnr {:.2} ± {:.2} dB",
        r.samples.len(),
        a.ssim.mean,
        a.ssim.std,
        a.psnr_db.mean,
        a.psnr_db.std
    );
    if let Some(b) = &r.baseline_aggregate {
        println!("  baseline: ssim {:.4} ± {:.4}, psnr {:.2} ± {:.2} dB", b.ssim.mean, b.ssim.std, b.psnr_db.mean, b.psnr_db.std);
    }
}

fn train(cfg: &CliConfig, out: PathBuf, cv: Option<usize>) -> Result<()> {
    let root = data_root(cfg)?;
    ensure_distinct(root, &out)?;
    let tc = &cfg.train;
    let unpaired = cfg.data.pairing == PairingMode::Unpaired;
    if tc.trainer == TrainerKind::Pix2pix && unpaired {
        return Err(usage("pix2pix trains on paired images; use --pairing paired or --trainer cyclegan"));
    }
    write_text(&out.join("config.toml"), &cfg.to_toml())?;

    if unpaired {
        if cv.is_some() || cfg.data.test_count > 0 {
            return Err(usage("cross-validation and test splits need paired data"));
        }
        let load = |d: &str| -> Result<Vec<NetImage>> { Ok(prepare_images(&load_domain(&root.join(d))?, &cfg.preprocess)?) };
        let a: Vec<_> = load(&cfg.data.source)?.into_iter().map(|i| i.tensor).collect();
        let b: Vec<_> = load(&cfg.data.target)?.into_iter().map(|i| i.tensor).collect();
        let ctx = reinitialize(Some(&out), tc.seed)?;
        let outcome = train_cyclegan(&a, &b, tc, &ctx)?;
        outcome.record.write(&out.join("run.json"))?;
        println!("trained {} epochs, {} checkpoints in {}", tc.epochs, outcome.record.checkpoints.len(), out.display());
        return Ok(());
    }

    let pairs = load_pairs(cfg).with_context(|| {
        if tc.trainer == TrainerKind::Pix2pix {
            "pix2pix needs paired images with matching file names in both domains"
        } else {
            "loading paired data (use --pairing unpaired for unmatched domains)"
        }
    })?;
    if cv.is_some() {
        let result = cross_validate(&pairs, tc, Some(&out))?;
        print_report(&format!("{}-fold cross-validation", tc.folds), &result.pooled);
        return Ok(());
    }
    let (train_set, test_set) = split_test(&pairs, cfg.data.test_count)?;
    let ctx = reinitialize(Some(&out), tc.seed)?;
    let mut outcome = train_on_pairs(&train_set, tc, &ctx)?;
    if !test_set.is_empty() {
        let report = evaluate_generator(&outcome.state, &test_set)?;
        report.write(&out, "test_report")?;
        print_report("test split", &report);
        outcome.record.validation = Some(report);
    }
    outcome.record.write(&out.join("run.json"))?;
    println!("trained {} epochs, {} checkpoints in {}", tc.epochs, outcome.record.checkpoints.len(), out.display());
    Ok(())
}

fn prepared_domain(cfg: &CliConfig, dir: &Path) -> Result<BTreeMap<String, NetImage>> {
    let samples: Vec<Sample> = load_domain(dir)?;
    if samples.is_empty() {
        bail!("no images in {}", dir.display());
    }
    Ok(prepare_images(&samples, &cfg.preprocess)?.into_iter().map(|i| (i.id.clone(), i)).collect())
}

fn eval(cfg: &CliConfig, generated: Option<PathBuf>, checkpoint: Option<PathBuf>, baseline: Option<String>, out: PathBuf) -> Result<()> {
    let root = data_root(cfg)?;
    let targets = prepared_domain(cfg, &root.join(&cfg.data.target))?;
    let generated: BTreeMap<String, lightgan::datapipe::RawImage> = match (generated, checkpoint) {
        (Some(dir), None) => prepared_domain(cfg, &dir)?.into_iter().map(|(k, v)| (k, v.prepared)).collect(),
        (None, Some(ck)) => {
            let ckpt = Checkpoint::load(&ck)?;
            let sources: Vec<NetImage> = prepared_domain(cfg, &root.join(&cfg.data.source))?.into_values().collect();
            let images = infer(&ckpt, &sources, 16, Direction::Forward)?;
            sources.iter().map(|s| s.id.clone()).zip(images).collect()
        }
        _ => return Err(usage("eval needs exactly one of --generated or --checkpoint")),
    };
    let missing: Vec<&String> = targets.keys().filter(|k| !generated.contains_key(*k)).collect();
    if !missing.is_empty() {
        bail!("no generated image for {} target(s), e.g. {}", missing.len(), missing[0]);
    }
    let base = baseline
        .map(|b| prepared_domain(cfg, &root.join(b)))
        .transpose()?;
    let tl: Vec<Labeled> = targets.iter().map(|(id, t)| Labeled { id, image: &t.prepared }).collect();
    let gl: Vec<Labeled> = targets.keys().map(|id| Labeled { id, image: &generated[id] }).collect();
    let bl: Option<Vec<Labeled>> = match &base {
        Some(b) => Some(
            targets
                .keys()
                .map(|id| {
                    b.get(id)
                        .map(|i| Labeled { id, image: &i.prepared })
                        .with_context(|| format!("baseline image {id} missing"))
                })
                .collect::<Result<_>>()?,
        ),
        None => None,
    };
    let report = evaluate_pairset(&gl, &tl, bl.as_deref())?;
    report.write(&out, "report")?;
    print_report("evaluation", &report);
    Ok(())
}

fn sweep(cfg: &CliConfig, presets: &[u8], out: PathBuf) -> Result<()> {
    let root = data_root(cfg)?;
    ensure_distinct(root, &out)?;
    let mut presets: Vec<Preset> = presets.iter().map(|&i| Preset::new(i)).collect::<lightgan::Result<_>>()?;
    presets.sort();
    presets.dedup();
    let pairs = load_pairs(cfg)?;
    let test_count = if cfg.data.test_count > 0 {
        cfg.data.test_count
    } else {
        (pairs.len() / 5).max(1)
    };
    let (train_set, test_set) = split_test(&pairs, test_count)?;
    let mut table = Table::new(["preset", "policy", "parameters", "storage_mb", "ssim", "psnr_db"]);
    for p in presets {
        let tc = lightgan::training::TrainConfig {
            model: ModelChoice::Preset(p),
            ..cfg.train.clone()
        };
        let dir = out.join(p.to_string());
        let ctx = reinitialize(Some(&dir), tc.seed)?;
        let outcome = train_on_pairs(&train_set, &tc, &ctx).with_context(|| format!("training {p}"))?;
        let report = evaluate_generator(&outcome.state, &test_set)?;
        report.write(&dir, "test_report")?;
        outcome.record.write(&dir.join("run.json"))?;
        let spec = p.generator();
        let storage = estimate_storage(&spec, &tc.discriminator(), tc.trainer, tc.epochs, tc.checkpoint_interval)?;
        table.push(vec![
            p.to_string(),
            p.policy().to_string(),
            generator_parameter_count(&spec)?.to_string(),
            fixed(storage.total_bytes as f64 / 1e6, 2),
            fixed(report.aggregate.ssim.mean, 4),
            fixed(report.aggregate.psnr_db.mean, 2),
        ]);
        eprintln!("{p}: done");
    }
    table.write(&out, "sweep")?;
    print!("{}", table.to_text());
    Ok(())
}

fn params(cfg: &CliConfig, csv: bool, out: Option<PathBuf>) -> Result<()> {
    let tc = &cfg.train;
    let mut table = Table::new([
        "preset",
        "policy",
        "generator_params",
        "discriminator_params",
        "checkpoints",
        "storage_mb",
    ]);
    for p in Preset::ALL {
        let g = p.generator();
        let d = lightgan::training::TrainConfig {
            model: ModelChoice::Preset(p),
            ..tc.clone()
        }
        .discriminator();
        let storage = estimate_storage(&g, &d, tc.trainer, tc.epochs, tc.checkpoint_interval)?;
        table.push(vec![
            p.to_string(),
            p.policy().to_string(),
            generator_parameter_count(&g)?.to_string(),
            discriminator_parameter_count(&d)?.to_string(),
            storage.checkpoints.to_string(),
            fixed(storage.total_bytes as f64 / 1e6, 2),
        ]);
    }
    if let Some(dir) = out {
        table.write(&dir, "params")?;
    }
    if csv {
        print!("{}", table.to_csv()?);
    } else {
        print!("{}", table.to_text());
    }
    Ok(())
}

fn diagnose(
    cfg: &CliConfig,
    checkpoint: &Path,
    experimental: Option<String>,
    tau: Option<f64>,
    validation: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<()> {
    if tau.is_none() && validation.is_none() {
        return Err(usage("give --tau or a --validation dataset to calibrate it"));
    }
    let out = required(out, "--out")?;
    let ckpt = Checkpoint::load(checkpoint)?;
    let mut exp_cfg = cfg.clone();
    if let Some(e) = experimental {
        exp_cfg.data.target = e;
    }
    let (confocal, exp): (Vec<NetImage>, Vec<NetImage>) = load_pairs(&exp_cfg)?.into_iter().unzip();
    let valid = match validation {
        Some(v) => {
            let mut vc = cfg.clone();
            vc.data.root = Some(v);
            Some(load_pairs(&vc)?)
        }
        None => None,
    };
    let report = diagnose_quality(&ckpt, &confocal, &exp, tau, valid.as_deref())?;

    let diff_dir = out.join("diff");
    std::fs::create_dir_all(&diff_dir).with_context(|| format!("creating {}", diff_dir.display()))?;
    let mut table = Table::new(["id", "ssim", "psnr_db", "flagged"]);
    for s in &report.samples {
        if let Some(d) = &s.difference {
            write_png(&diff_dir.join(format!("{}.png", s.id)), d)?;
        }
        table.push(vec![s.id.clone(), fixed(s.ssim, 4), fixed(s.psnr_db, 2), s.flagged.to_string()]);
    }
    table.write(&out, "diagnostic")?;
    write_text(&out.join("diagnostic.json"), &(serde_json::to_string_pretty(&report)? + "\n"))?;
    println!("tau = {:.4}", report.tau);
    let flagged: Vec<_> = report.flagged().collect();
    println!("{} of {} samples flagged as degraded", flagged.len(), report.samples.len());
    for s in flagged {
        println!("  {}  ssim {:.4}", s.id, s.ssim);
    }
    Ok(())
}

fn time(
    cfg: &CliConfig,
    checkpoint: &Path,
    counts: &[usize],
    reps: usize,
    direction: Direction,
    self_test: bool,
    out: Option<PathBuf>,
) -> Result<()> {
    let root = data_root(cfg)?;
    Checkpoint::load(checkpoint).with_context(|| format!("reading {}", checkpoint.display()))?;
    let images: Vec<NetImage> = prepared_domain(cfg, &root.join(&cfg.data.source))?.into_values().collect();
    let rows = time_inference(checkpoint, &images, counts, reps, direction)?;
    let mut table = Table::new(["count", "seconds_per_image", "std", "repetitions"]);
    for r in &rows {
        table.push(vec![
            r.count.to_string(),
            format!("{:.6}", r.seconds_per_image.mean),
            format!("{:.6}", r.seconds_per_image.std),
            r.repetitions.to_string(),
        ]);
    }
    if let Some(dir) = out {
        table.write(&dir, "timing")?;
    }
    print!("{}", table.to_text());
    if self_test {
        let means: Vec<f64> = rows.iter().map(|r| r.seconds_per_image.mean).collect();
        if means.windows(2).any(|w| w[1] > w[0]) {
            bail!("self-test failed: per-image time increases with the image count: {means:?}");
        }
        println!("self-test passed: per-image time is non-increasing");
    }
    Ok(())
}
