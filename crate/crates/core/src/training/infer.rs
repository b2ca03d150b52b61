use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compute::layers::Differentiable;
use crate::compute::params::ParamSet;
use crate::compute::tensor::Tensor4;
use crate::datapipe::dataset::NetImage;
use crate::datapipe::image::RawImage;
use crate::datapipe::preprocess::{denormalize, NormRange};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_pairset, Labeled, MetricReport, Summary};
use crate::models::generator::Generator;
use crate::models::storage::TrainerKind;
use crate::training::checkpoint::Checkpoint;

/// Which generator of a checkpoint to run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// G: source to target.
    #[default]
    Forward,
    /// F: target to source (CycleGAN only).
    Backward,
}

/// A generator ready for inference.
pub struct InferenceModel {
    net: Generator,
    params: ParamSet,
}

impl InferenceModel {
    pub fn from_checkpoint(ckpt: &Checkpoint, direction: Direction) -> Result<Self> {
        let name = match (direction, ckpt.manifest.trainer) {
            (Direction::Forward, _) => "G",
            (Direction::Backward, TrainerKind::Cyclegan) => "F",
            (Direction::Backward, TrainerKind::Pix2pix) => {
                return Err(Error::Unsupported("pix2pix checkpoints have no backward generator".into()))
            }
        };
        Ok(InferenceModel {
            net: Generator::new(ckpt.manifest.generator)?,
            params: ckpt.network(name)?.params.clone(),
        })
    }

    pub fn input_size(&self) -> usize {
        self.net.spec().input_size
    }

    /// Raw network output in `[-1, 1]`.
    pub fn forward(&self, x: &Tensor4) -> Result<Tensor4> {
        self.net.forward(&self.params, x)
    }

    /// Translate preprocessed images. Outputs span the full intensity range
    /// of each input's bit depth. Batches only group the work; every image is
    /// computed independently, so `batch_size` never changes the result.
    pub fn run(&self, inputs: &[NetImage], batch_size: usize) -> Result<Vec<RawImage>> {
        if batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        let size = self.input_size();
        if let Some(bad) = inputs.iter().find(|i| i.prepared.width() != size || i.prepared.height() != size) {
            return Err(Error::InvalidArgument(format!(
                "{}: input is {}x{}, the generator needs {size}x{size}",
                bad.id,
                bad.prepared.width(),
                bad.prepared.height()
            )));
        }
        let chunks: Vec<Vec<RawImage>> = inputs
            .par_chunks(batch_size)
            .map(|chunk| {
                let tensors: Vec<Tensor4> = chunk.iter().map(|i| i.tensor.clone()).collect();
                let out = self.forward(&Tensor4::stack(&tensors)?)?;
                chunk
                    .iter()
                    .enumerate()
                    .map(|(n, img)| denormalize(&out, n, NormRange::full(img.prepared.bit_depth())))
                    .collect()
            })
            .collect::<Result<_>>()?;
        Ok(chunks.into_iter().flatten().collect())
    }
}

pub fn infer(ckpt: &Checkpoint, inputs: &[NetImage], batch_size: usize, direction: Direction) -> Result<Vec<RawImage>> {
    InferenceModel::from_checkpoint(ckpt, direction)?.run(inputs, batch_size)
}

/// Score G(source) against target for each pair, with the prepared source as
/// the baseline.
pub fn evaluate_generator(ckpt: &Checkpoint, pairs: &[(NetImage, NetImage)]) -> Result<MetricReport> {
    let sources: Vec<NetImage> = pairs.iter().map(|(a, _)| a.clone()).collect();
    let generated = infer(ckpt, &sources, 16, Direction::Forward)?;
    let gen: Vec<Labeled> = pairs
        .iter()
        .zip(&generated)
        .map(|((a, _), g)| Labeled { id: &a.id, image: g })
        .collect();
    let targets: Vec<Labeled> = pairs.iter().map(|(a, b)| Labeled { id: &a.id, image: &b.prepared }).collect();
    let baselines: Vec<Labeled> = pairs.iter().map(|(a, _)| Labeled { id: &a.id, image: &a.prepared }).collect();
    evaluate_pairset(&gen, &targets, Some(&baselines))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub count: usize,
    /// Per-image seconds over the repetitions.
    pub seconds_per_image: Summary,
    pub repetitions: usize,
}

/// Wall-clock a full inference pass for each image count.
///
/// Every timed pass starts from the checkpoint file: it loads and validates
/// the archive, builds the generator, runs one warm-up forward pass, then
/// translates `count` images (cycling through `images`) in one batch.
pub fn time_inference(
    checkpoint: &Path,
    images: &[NetImage],
    counts: &[usize],
    repetitions: usize,
    direction: Direction,
) -> Result<Vec<TimingRow>> {
    if images.is_empty() {
        return Err(Error::InvalidArgument("timing needs at least one image".into()));
    }
    if counts.is_empty() || counts[0] == 0 || counts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("counts must be positive and strictly increasing".into()));
    }
    if repetitions == 0 {
        return Err(Error::InvalidArgument("repetitions must be >= 1".into()));
    }
    let mut rows = Vec::with_capacity(counts.len());
    for &count in counts {
        let batch: Vec<NetImage> = images.iter().cycle().take(count).cloned().collect();
        let mut per_image = Vec::with_capacity(repetitions);
        for _ in 0..repetitions {
            let start = Instant::now();
            let ckpt = Checkpoint::load(checkpoint)?;
            let model = InferenceModel::from_checkpoint(&ckpt, direction)?;
            model.forward(&batch[0].tensor)?;
            let out = model.run(&batch, count)?;
            std::hint::black_box(&out);
            per_image.push(start.elapsed().as_secs_f64() / count as f64);
        }
        rows.push(TimingRow {
            count,
            seconds_per_image: Summary::of(&per_image),
            repetitions,
        });
    }
    Ok(rows)
}
