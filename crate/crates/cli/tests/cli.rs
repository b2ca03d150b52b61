use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn lightgan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lightgan")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = lightgan(args);
    assert!(
        out.status.success(),
        "{args:?} failed with {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, n: usize, extra: &[&str]) -> PathBuf {
    let out = dir.join("data");
    let n = n.to_string();
    let mut args = vec!["synth", "--out", s(&out), "--n", &n, "--seed", "7"];
    args.extend_from_slice(extra);
    ok(&args);
    out
}

fn pngs(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".png"))
        .collect();
    names.sort();
    names
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn help_and_version_exit_zero() {
    assert!(lightgan(&["--help"]).status.success());
    assert!(lightgan(&["--version"]).status.success());
    assert_eq!(lightgan(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn synth_writes_triplets_deterministically() {
    let t = TempDir::new().unwrap();
    let a = synth(t.path(), 8, &[]);
    for d in ["confocal", "sted", "truth"] {
        assert_eq!(pngs(&a.join(d)).len(), 8, "{d}");
    }
    assert!(a.join("manifest.json").is_file());

    let b = t.path().join("again");
    ok(&["synth", "--out", s(&b), "--n", "8", "--seed", "7"]);
    for name in pngs(&a.join("sted")) {
        let x = std::fs::read(a.join("sted").join(&name)).unwrap();
        let y = std::fs::read(b.join("sted").join(&name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
}

#[test]
fn bad_psf_is_a_config_error() {
    let t = TempDir::new().unwrap();
    let out = t.path().join("d");
    let r = lightgan(&["synth", "--out", s(&out), "--n", "2", "--psf-confocal", "1", "--psf-sted", "2"]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("psf_sigma_confocal > psf_sigma_sted"));
}

#[test]
fn missing_required_flag_is_usage_error() {
    assert_eq!(lightgan(&["synth", "--n", "2"]).status.code(), Some(1));
    assert_eq!(lightgan(&["train", "--out", "/tmp/nowhere-lightgan"]).status.code(), Some(1));
}

#[test]
fn config_dump_round_trips() {
    let t = TempDir::new().unwrap();
    let dumped = ok(&["train", "--epochs", "10", "--seed", "3", "--dump-config"]);
    assert!(dumped.contains("epochs = 10"));
    let path = t.path().join("cfg.toml");
    std::fs::write(&path, &dumped).unwrap();
    let again = ok(&["train", "--config", s(&path), "--dump-config"]);
    assert_eq!(dumped, again);

    std::fs::write(&path, format!("{dumped}\n[bogus]\nx = 1\n")).unwrap();
    assert_eq!(lightgan(&["train", "--config", s(&path), "--dump-config"]).status.code(), Some(1));
    std::fs::write(&path, "[train]\nepochs = 7\ncheckpoint_interval = 5\n").unwrap();
    assert_eq!(lightgan(&["train", "--config", s(&path), "--dump-config"]).status.code(), Some(1));
}

#[test]
fn cyclegan_training_writes_checkpoints_and_log() {
    let t = TempDir::new().unwrap();
    let data = synth(t.path(), 3, &[]);
    let run = t.path().join("run");
    ok(&[
        "train", "--data", s(&data), "--out", s(&run), "--pairing", "unpaired", "--trainer", "cyclegan", "--model", "model9",
        "--epochs", "10", "--interval", "5", "--seed", "1",
    ]);
    let ckpts = std::fs::read_dir(run.join("checkpoints")).unwrap().count();
    assert_eq!(ckpts, 2);
    let log = std::fs::read_to_string(run.join("run.jsonl")).unwrap();
    assert_eq!(log.lines().filter(|l| l.contains("\"kind\":\"epoch\"")).count(), 10);
    assert!(run.join("run.json").is_file());
    assert!(run.join("config.toml").is_file());
}

#[test]
fn pix2pix_rejects_unpaired_layout() {
    let t = TempDir::new().unwrap();
    let data = synth(t.path(), 3, &[]);
    std::fs::rename(data.join("sted").join("s0000.png"), data.join("sted").join("other.png")).unwrap();
    let run = t.path().join("run");
    let r = lightgan(&["train", "--data", s(&data), "--out", s(&run), "--trainer", "pix2pix", "--epochs", "1"]);
    assert_ne!(r.status.code(), Some(0));
    let err = String::from_utf8_lossy(&r.stderr).to_lowercase();
    assert!(err.contains("paired"), "{err}");

    let r = lightgan(&["train", "--data", s(&data), "--out", s(&run), "--trainer", "pix2pix", "--pairing", "unpaired"]);
    assert_eq!(r.status.code(), Some(1));
}

#[test]
fn cross_validation_writes_fold_reports() {
    let t = TempDir::new().unwrap();
    let data = synth(t.path(), 5, &[]);
    let run = t.path().join("cv");
    ok(&[
        "train", "--data", s(&data), "--out", s(&run), "--trainer", "pix2pix", "--epochs", "1", "--cv", "5",
    ]);
    for i in 0..5 {
        assert!(run.join(format!("fold_{i}")).join("validation.csv").is_file());
    }
    let rows = csv_rows(&run.join("cv_report.csv"));
    assert_eq!(rows.len(), 6);
    let mut ids: Vec<&str> = rows[1..].iter().map(|r| r[0].as_str()).collect();
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 5);
}

#[test]
fn eval_targets_against_themselves() {
    let t = TempDir::new().unwrap();
    let data = synth(t.path(), 4, &[]);
    let out = t.path().join("eval");
    ok(&["eval", "--data", s(&data), "--generated", s(&data.join("sted")), "--out", s(&out)]);
    let rows = csv_rows(&out.join("report.csv"));
    assert_eq!(rows.len(), 5);
    let ssim = rows[0].iter().position(|h| h == "ssim").unwrap();
    for r in &rows[1..] {
        assert_eq!(r[ssim].parse::<f64>().unwrap(), 1.0);
    }

    ok(&[
        "eval", "--data", s(&data), "--generated", s(&data.join("sted")), "--baseline", "confocal", "--out", s(&out),
    ]);
    let rows = csv_rows(&out.join("report.csv"));
    assert!(rows[0].contains(&"baseline_ssim".to_string()));
    let b = rows[0].iter().position(|h| h == "baseline_ssim").unwrap();
    assert!(rows[1..].iter().all(|r| r[b].parse::<f64>().unwrap() < 1.0));
}

#[test]
fn sweep_tabulates_presets_in_order() {
    let t = TempDir::new().unwrap();
    let data = synth(t.path(), 5, &[]);
    let out = t.path().join("sweep");
    ok(&[
        "sweep", "--data", s(&data), "--out", s(&out), "--presets", "9,8", "--trainer", "pix2pix", "--epochs", "1",
    ]);
    assert!(out.join("model8").join("test_report.csv").is_file());
    assert!(out.join("model9").join("test_report.csv").is_file());
    let rows = csv_rows(&out.join("sweep.csv"));
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[1][0], "model8");
    assert_eq!(rows[1][2], "46961");
    assert_eq!(rows[2][0], "model9");
    assert_eq!(rows[2][2], "11961");
}

#[test]
fn params_table_has_all_presets() {
    let text = ok(&["params", "--csv"]);
    let rows: Vec<Vec<&str>> = text.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 10);
    assert_eq!(rows[0][0], "preset");
    let m9: u64 = rows[9][2].parse().unwrap();
    assert!((8_000..=12_000).contains(&m9));
    assert_eq!(rows[1][2], "30609281");
    assert_eq!(rows[9][4], "40");
    assert_eq!(ok(&["params"]).lines().count(), 11);
}

fn quick_checkpoint(dir: &Path, data: &Path) -> PathBuf {
    let run = dir.join("p2p");
    ok(&["train", "--data", s(data), "--out", s(&run), "--trainer", "pix2pix", "--epochs", "1", "--interval", "1"]);
    run.join("checkpoints").join("epoch_0001.ckpt")
}

#[test]
fn diagnose_writes_difference_maps() {
    let t = TempDir::new().unwrap();
    let data = synth(t.path(), 4, &[]);
    let ckpt = quick_checkpoint(t.path(), &data);
    assert!(ckpt.is_file());
    let out = t.path().join("diag");
    let r = lightgan(&["diagnose", "--data", s(&data), "--checkpoint", s(&ckpt), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(1));
    let text = ok(&["diagnose", "--data", s(&data), "--checkpoint", s(&ckpt), "--tau", "0.5", "--out", s(&out)]);
    assert!(text.contains("tau = 0.5000"));
    assert_eq!(pngs(&out.join("diff")).len(), 4);
    assert_eq!(csv_rows(&out.join("diagnostic.csv")).len(), 5);

    let cal = t.path().join("cal");
    ok(&["diagnose", "--data", s(&data), "--checkpoint", s(&ckpt), "--validation", s(&data), "--out", s(&cal)]);
    assert!(cal.join("diagnostic.json").is_file());
}

#[test]
fn timing_table_rows() {
    let t = TempDir::new().unwrap();
    let data = synth(t.path(), 2, &[]);
    let ckpt = quick_checkpoint(t.path(), &data);
    let out = t.path().join("time");
    ok(&[
        "time", "--data", s(&data), "--checkpoint", s(&ckpt), "--counts", "1,8,64", "--reps", "1", "--out", s(&out),
    ]);
    let rows = csv_rows(&out.join("timing.csv"));
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[3][0], "64");
    let r = lightgan(&["time", "--data", s(&data), "--checkpoint", s(&ckpt), "--counts", "8,1"]);
    assert_ne!(r.status.code(), Some(0));
    let r = lightgan(&["time", "--data", s(&data), "--checkpoint", s(&ckpt), "--direction", "backward"]);
    assert_ne!(r.status.code(), Some(0));
}

#[test]
fn preprocess_refuses_in_place_and_writes_copy() {
    let t = TempDir::new().unwrap();
    let data = synth(t.path(), 2, &[]);
    assert_eq!(lightgan(&["preprocess", "--data", s(&data), "--out", s(&data)]).status.code(), Some(1));
    let out = t.path().join("prep");
    ok(&["preprocess", "--data", s(&data), "--out", s(&out)]);
    assert_eq!(pngs(&out.join("confocal")).len(), 2);
    assert_eq!(pngs(&out.join("sted")).len(), 2);
}
