use serde::{Deserialize, Serialize};

use crate::compute::params::AdamConfig;
use crate::error::{Error, Result};
use crate::losses::{GanMode, LossWeights};
use crate::models::spec::{DiscriminatorSpec, GeneratorSpec, Preset};
use crate::models::storage::TrainerKind;

/// A named preset or a fully custom generator architecture.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelChoice {
    Preset(Preset),
    Custom(GeneratorSpec),
}

impl ModelChoice {
    pub fn generator(&self) -> GeneratorSpec {
        match self {
            ModelChoice::Preset(p) => p.generator(),
            ModelChoice::Custom(s) => *s,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub trainer: TrainerKind,
    pub epochs: usize,
    pub checkpoint_interval: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weights: LossWeights,
    pub seed: u64,
    pub folds: usize,
    pub model: ModelChoice,
    /// Base width of a doubling PatchGAN sized independently of the
    /// generator; unset ties the discriminator to the generator policy.
    pub discriminator_base: Option<usize>,
    /// Generator loss `log(1 - D(G(x)))` instead of the non-saturating form.
    pub literal_minimax: bool,
    /// Least-squares adversarial loss.
    pub lsgan: bool,
    /// Fake-image history for CycleGAN discriminator updates; 0 disables it.
    pub pool_size: usize,
    /// Linear learning-rate decay to zero over the second half of training.
    pub lr_decay: bool,
    /// Random dihedral augmentation of every training pair.
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainConfig {
            trainer: TrainerKind::Cyclegan,
            epochs: 200,
            checkpoint_interval: 5,
            batch_size: 1,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            weights: LossWeights::default(),
            seed: 0,
            folds: 5,
            model: ModelChoice::Preset(Preset::new(9).expect("valid preset")),
            discriminator_base: None,
            literal_minimax: false,
            lsgan: false,
            pool_size: 50,
            lr_decay: false,
            augment: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.checkpoint_interval == 0 || self.epochs % self.checkpoint_interval != 0 {
            return Err(Error::Config(format!(
                "checkpoint_interval {} must divide epochs {}",
                self.checkpoint_interval, self.epochs
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config("folds must be >= 2".into()));
        }
        if self.discriminator_base == Some(0) {
            return Err(Error::Config("discriminator_base must be >= 1".into()));
        }
        if self.literal_minimax && self.lsgan {
            return Err(Error::Config("literal_minimax and lsgan are mutually exclusive".into()));
        }
        self.adam().validate().map_err(|e| Error::Config(e.to_string()))?;
        self.weights.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.generator().validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn gan_mode(&self) -> GanMode {
        if self.lsgan {
            GanMode::LeastSquares
        } else if self.literal_minimax {
            GanMode::Literal
        } else {
            GanMode::NonSaturating
        }
    }

    pub fn generator(&self) -> GeneratorSpec {
        self.model.generator()
    }

    /// Pix2Pix discriminators see the source and the candidate side by side.
    pub fn discriminator(&self) -> DiscriminatorSpec {
        let in_channels = match self.trainer {
            TrainerKind::Pix2pix => 2,
            TrainerKind::Cyclegan => 1,
        };
        let g = self.generator();
        match self.discriminator_base {
            Some(base) => DiscriminatorSpec::doubling(base, in_channels, g.norm),
            None => DiscriminatorSpec::coupled(&g, in_channels),
        }
    }

    /// Learning rate used during `epoch` (1-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if !self.lr_decay {
            return self.lr;
        }
        let half = self.epochs / 2;
        if epoch <= half {
            self.lr
        } else {
            self.lr * (1.0 - (epoch - half) as f64 / (self.epochs - half + 1) as f64)
        }
    }
}
