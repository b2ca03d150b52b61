use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::discriminator::discriminator_network;
use crate::models::generator::Generator;
use crate::models::spec::{DiscriminatorSpec, GeneratorSpec};
use crate::training::checkpoint::{entry_header_bytes, entry_names, is_generator, network_names};

/// Bytes per stored parameter value (little-endian `f32`).
pub const BYTES_PER_VALUE: u64 = 4;

/// Allowance for the text manifest at the head of each checkpoint.
pub const MANIFEST_BYTES: u64 = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainerKind {
    Pix2pix,
    Cyclegan,
}

impl std::fmt::Display for TrainerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TrainerKind::Pix2pix => "pix2pix",
            TrainerKind::Cyclegan => "cyclegan",
        })
    }
}

impl std::str::FromStr for TrainerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "pix2pix" => Ok(TrainerKind::Pix2pix),
            "cyclegan" => Ok(TrainerKind::Cyclegan),
            other => Err(Error::Config(format!("unknown trainer {other:?}; expected pix2pix or cyclegan"))),
        }
    }
}

/// Raw parameter bytes of a network snapshot, without headers or manifest.
pub fn snapshot_bytes(parameter_count: usize) -> u64 {
    parameter_count as u64 * BYTES_PER_VALUE
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct StorageEstimate {
    pub checkpoints: u64,
    pub bytes_per_checkpoint: u64,
    pub total_bytes: u64,
}

/// Projected disk usage of a training run that checkpoints every `interval`
/// epochs. Each checkpoint stores every network of the trainer (generator and
/// discriminator, two of each for CycleGAN) plus its two Adam moment arrays,
/// one header per array and the manifest.
pub fn estimate_storage(
    generator: &GeneratorSpec,
    discriminator: &DiscriminatorSpec,
    trainer: TrainerKind,
    epochs: usize,
    interval: usize,
) -> Result<StorageEstimate> {
    if interval == 0 || epochs == 0 || epochs % interval != 0 {
        return Err(Error::InvalidArgument(format!(
            "checkpoint interval {interval} must divide epochs {epochs}"
        )));
    }
    let g = Generator::new(*generator)?.param_specs();
    let d = discriminator_network(discriminator)?.params();
    let mut per = MANIFEST_BYTES;
    for &net in network_names(trainer) {
        let specs = if is_generator(net) { &g } else { &d };
        for spec in specs.iter() {
            for entry in entry_names(net, &spec.name) {
                per += entry_header_bytes(&entry, &spec.shape) + snapshot_bytes(spec.len());
            }
        }
    }
    let checkpoints = (epochs / interval) as u64;
    Ok(StorageEstimate {
        checkpoints,
        bytes_per_checkpoint: per,
        total_bytes: checkpoints * per,
    })
}
