use serde::{Deserialize, Serialize};

use crate::datapipe::dataset::NetImage;
use crate::datapipe::image::RawImage;
use crate::error::{Error, Result};
use crate::metrics::{score, Summary};
use crate::training::checkpoint::Checkpoint;
use crate::training::infer::{Direction, InferenceModel};

/// How far below the validation mean (in standard deviations) the
/// calibrated threshold sits.
pub const CALIBRATION_SIGMAS: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub mean: f64,
    pub std: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticSample {
    pub id: String,
    pub ssim: f64,
    pub psnr_db: f64,
    pub flagged: bool,
    /// `|G(confocal) - experimental|` per pixel.
    #[serde(skip)]
    pub difference: Option<RawImage>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub tau: f64,
    pub calibration: Option<Calibration>,
    pub samples: Vec<DiagnosticSample>,
}

impl DiagnosticReport {
    pub fn flagged(&self) -> impl Iterator<Item = &DiagnosticSample> {
        self.samples.iter().filter(|s| s.flagged)
    }

    pub fn flagged_fraction(&self) -> f64 {
        if self.samples.is_empty() {
            0.0
        } else {
            self.flagged().count() as f64 / self.samples.len() as f64
        }
    }
}

/// Per-pixel absolute difference, in the bit depth of `a`.
pub fn difference_map(a: &RawImage, b: &RawImage) -> Result<RawImage> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(Error::InvalidArgument(format!(
            "difference map of {}x{} and {}x{} images",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let max = a.max_value();
    let pixels = a.pixels().iter().zip(b.pixels()).map(|(&p, &q)| p.abs_diff(q).min(max)).collect();
    RawImage::new(a.width(), a.height(), a.bit_depth(), pixels)
}

/// Threshold `mean - 2 std` of `ssim(G(source), target)` over high-quality pairs.
pub fn calibrate_tau(model: &InferenceModel, validation: &[(NetImage, NetImage)]) -> Result<(f64, Calibration)> {
    if validation.is_empty() {
        return Err(Error::InvalidArgument("calibration needs at least one validation pair".into()));
    }
    let sources: Vec<NetImage> = validation.iter().map(|(a, _)| a.clone()).collect();
    let generated = model.run(&sources, 16)?;
    let ssims = validation
        .iter()
        .zip(&generated)
        .map(|((_, t), g)| Ok(score(&t.prepared, g)?.ssim))
        .collect::<Result<Vec<f64>>>()?;
    let s = Summary::of(&ssims);
    Ok((
        s.mean - CALIBRATION_SIGMAS * s.std,
        Calibration {
            mean: s.mean,
            std: s.std,
            samples: ssims.len(),
        },
    ))
}

/// Compare each experimental image with the generator's prediction from its
/// confocal partner and flag samples whose SSIM falls below `tau`. Without an
/// explicit `tau`, it is calibrated on `validation`.
pub fn diagnose_quality(
    ckpt: &Checkpoint,
    confocal: &[NetImage],
    experimental: &[NetImage],
    tau: Option<f64>,
    validation: Option<&[(NetImage, NetImage)]>,
) -> Result<DiagnosticReport> {
    if confocal.len() != experimental.len() {
        return Err(Error::InvalidArgument(format!(
            "{} confocal images but {} experimental images",
            confocal.len(),
            experimental.len()
        )));
    }
    if let Some((c, e)) = confocal.iter().zip(experimental).find(|(c, e)| c.id != e.id) {
        return Err(Error::InvalidArgument(format!("unpaired samples {} and {}", c.id, e.id)));
    }
    let model = InferenceModel::from_checkpoint(ckpt, Direction::Forward)?;
    let (tau, calibration) = match (tau, validation) {
        (Some(t), _) => (t, None),
        (None, Some(v)) => {
            let (t, c) = calibrate_tau(&model, v)?;
            (t, Some(c))
        }
        (None, None) => {
            return Err(Error::InvalidArgument(
                "no threshold given and no validation set to calibrate one".into(),
            ))
        }
    };
    let generated = model.run(confocal, 16)?;
    let samples = experimental
        .iter()
        .zip(&generated)
        .map(|(e, g)| {
            let s = score(&e.prepared, g)?;
            Ok(DiagnosticSample {
                id: e.id.clone(),
                ssim: s.ssim,
                psnr_db: s.psnr_db,
                flagged: s.ssim < tau,
                difference: Some(difference_map(g, &e.prepared)?),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DiagnosticReport {
        tau,
        calibration,
        samples,
    })
}
