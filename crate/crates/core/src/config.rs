use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datapipe::dataset::PairingMode;
use crate::datapipe::preprocess::Preprocess;
use crate::datapipe::synth::SynthConfig;
use crate::error::{Error, Result};
use crate::metrics::SsimParams;
use crate::training::config::TrainConfig;

/// Where the data lives and how the two domains relate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub root: Option<PathBuf>,
    pub source: String,
    pub target: String,
    pub pairing: PairingMode,
    /// Translation search radius for pair registration; 0 disables it.
    pub registration_radius: usize,
    pub mi_bins: usize,
    /// Samples held out as the test split when no cross-validation is run.
    pub test_count: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            root: None,
            source: "confocal".into(),
            target: "sted".into(),
            pairing: PairingMode::Paired,
            registration_radius: 4,
            mi_bins: 64,
            test_count: 0,
        }
    }
}

/// Full configuration document: data paths, preprocessing, synthesis,
/// training and metric parameters.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub data: DataConfig,
    pub preprocess: Preprocess,
    pub synth: SynthConfig,
    pub train: TrainConfig,
    pub ssim: SsimParams,
}

impl CliConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: CliConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        CliConfig::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Set every seed in the document.
    pub fn set_seed(&mut self, seed: u64) {
        self.synth.seed = seed;
        self.train.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.train.validate()?;
        self.ssim.validate()?;
        if self.data.mi_bins < 2 {
            return Err(Error::Config("data.mi_bins must be >= 2".into()));
        }
        if self.data.source == self.data.target {
            return Err(Error::Config("data.source and data.target must differ".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_stable() {
        let mut c = CliConfig::default();
        c.data.root = Some("data/run".into());
        c.train.epochs = 30;
        c.train.checkpoint_interval = 10;
        c.set_seed(11);
        let text = c.to_toml();
        let back = CliConfig::parse(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_toml(), text);
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let c = CliConfig::parse("[train]\ntrainer = \"pix2pix\"\nepochs = 10\n").unwrap();
        assert_eq!(c.train.epochs, 10);
        assert_eq!(c.synth, SynthConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for doc in ["colour = 1", "[train]\nepoc = 3", "[synth]\nsigma = 2.0", "[data]\nroot = \"x\"\nextra = 1"] {
            assert!(CliConfig::parse(doc).is_err(), "{doc}");
        }
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(CliConfig::parse("[train]\nepochs = 12\ncheckpoint_interval = 5").is_err());
        assert!(CliConfig::parse("[synth]\npsf_sigma_confocal = 0.5").is_err());
    }
}
