use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::compute::tensor::Tensor4;
use crate::datapipe::dataset::NetImage;
use crate::datapipe::folds::{make_folds, FoldAssignment};
use crate::error::{Error, Result};
use crate::metrics::MetricReport;
use crate::models::storage::TrainerKind;
use crate::training::config::TrainConfig;
use crate::training::context::{reinitialize, RunContext};
use crate::training::infer::evaluate_generator;
use crate::training::trainer::{train_cyclegan, train_pix2pix, RunRecord, TrainOutcome};

/// Train on `(source, target)` pairs with the configured trainer. CycleGAN
/// ignores the pairing and treats the two sides as separate domains.
pub fn train_on_pairs(pairs: &[(NetImage, NetImage)], cfg: &TrainConfig, ctx: &RunContext) -> Result<TrainOutcome> {
    match cfg.trainer {
        TrainerKind::Pix2pix => {
            let data: Vec<(Tensor4, Tensor4)> = pairs.iter().map(|(a, b)| (a.tensor.clone(), b.tensor.clone())).collect();
            train_pix2pix(&data, cfg, ctx)
        }
        TrainerKind::Cyclegan => {
            let a: Vec<Tensor4> = pairs.iter().map(|(a, _)| a.tensor.clone()).collect();
            let b: Vec<Tensor4> = pairs.iter().map(|(_, b)| b.tensor.clone()).collect();
            train_cyclegan(&a, &b, cfg, ctx)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub folds: FoldAssignment,
    pub runs: Vec<RunRecord>,
    pub pooled: MetricReport,
}

pub const POOLED_REPORT: &str = "cv_report";

/// k-fold cross-validation. Fold `i` is reinitialized with seed `seed + i`,
/// trained on the other folds and evaluated on its own samples (ids taken
/// from the source side of each pair). With `run_dir`, fold `i` writes into
/// `fold_i/` and the pooled report lands in `run_dir`.
pub fn cross_validate(pairs: &[(NetImage, NetImage)], cfg: &TrainConfig, run_dir: Option<&Path>) -> Result<CvOutcome> {
    cfg.validate()?;
    let ids: Vec<String> = pairs.iter().map(|(a, _)| a.id.clone()).collect();
    let folds = make_folds(&ids, cfg.folds, cfg.seed)?;
    let mut runs = Vec::with_capacity(cfg.folds);
    let mut reports = Vec::with_capacity(cfg.folds);
    for fold in 0..cfg.folds {
        let wrap = |e: Error| Error::Fold {
            fold,
            source: Box::new(e),
        };
        let held: BTreeSet<&str> = folds.validation(fold).into_iter().collect();
        let (valid, train): (Vec<_>, Vec<_>) = pairs.iter().cloned().partition(|(a, _)| held.contains(a.id.as_str()));
        let dir = run_dir.map(|d| d.join(format!("fold_{fold}")));
        let ctx = reinitialize(dir.as_deref(), cfg.seed + fold as u64).map_err(wrap)?;
        let outcome = train_on_pairs(&train, cfg, &ctx).map_err(wrap)?;
        let report = evaluate_generator(&outcome.state, &valid).map_err(wrap)?;
        let mut record = outcome.record;
        record.fold = Some(fold);
        record.validation = Some(report.clone());
        if let Some(d) = &dir {
            record.write(&d.join("run.json")).map_err(wrap)?;
            report.write(d, "validation").map_err(wrap)?;
        }
        runs.push(record);
        reports.push(report);
    }
    let pooled = MetricReport::pooled(&reports);
    if let Some(d) = run_dir {
        pooled.write(d, POOLED_REPORT)?;
    }
    Ok(CvOutcome { folds, runs, pooled })
}
