use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Feature-channel assignment across U-Net levels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChannelPolicy {
    /// Width doubles after each downsampling (capped, see [`GeneratorSpec::max_doubling`]).
    Doubling(usize),
    /// Every level uses the same width.
    Fixed(usize),
}

impl ChannelPolicy {
    pub fn base(self) -> usize {
        match self {
            ChannelPolicy::Doubling(b) | ChannelPolicy::Fixed(b) => b,
        }
    }
}

impl fmt::Display for ChannelPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChannelPolicy::Doubling(b) => write!(f, "doubling({b})"),
            ChannelPolicy::Fixed(w) => write!(f, "fixed({w})"),
        }
    }
}

impl FromStr for ChannelPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let parse = |inner: &str| -> Result<usize> {
            inner
                .trim_end_matches(')')
                .parse::<usize>()
                .ok()
                .filter(|&v| v > 0)
                .ok_or_else(|| Error::Config(format!("invalid channel width in {s:?}")))
        };
        if let Some(rest) = s.strip_prefix("doubling(") {
            Ok(ChannelPolicy::Doubling(parse(rest)?))
        } else if let Some(rest) = s.strip_prefix("fixed(") {
            Ok(ChannelPolicy::Fixed(parse(rest)?))
        } else {
            Err(Error::Config(format!("unknown channel policy {s:?}; expected doubling(N) or fixed(N)")))
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    #[default]
    Instance,
    None,
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NormKind::Instance => "instance",
            NormKind::None => "none",
        })
    }
}

impl FromStr for NormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "instance" => Ok(NormKind::Instance),
            "none" => Ok(NormKind::None),
            other => Err(Error::Config(format!("unknown norm {other:?}; expected instance or none"))),
        }
    }
}

/// Declarative U-Net generator architecture.
///
/// `levels` counts resolution levels: level 0 runs at the input size and each
/// further level halves it, so there are `levels - 1` stride-2 downsamplings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub policy: ChannelPolicy,
    pub levels: usize,
    /// Doubling stops after this many downsamplings (bottleneck = base * 2^max_doubling).
    pub max_doubling: u32,
    pub kernel: usize,
    pub down_kernel: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub norm: NormKind,
    pub input_size: usize,
}

impl GeneratorSpec {
    pub const DEFAULT_LEVELS: usize = 8;
    pub const DEFAULT_MAX_DOUBLING: u32 = 3;
    pub const INPUT_SIZE: usize = 128;

    pub fn new(policy: ChannelPolicy) -> Self {
        GeneratorSpec {
            policy,
            levels: Self::DEFAULT_LEVELS,
            max_doubling: Self::DEFAULT_MAX_DOUBLING,
            kernel: 3,
            down_kernel: 3,
            in_channels: 1,
            out_channels: 1,
            norm: NormKind::Instance,
            input_size: Self::INPUT_SIZE,
        }
    }

    pub fn with_levels(mut self, levels: usize) -> Self {
        self.levels = levels;
        self
    }

    pub fn with_norm(mut self, norm: NormKind) -> Self {
        self.norm = norm;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.policy.base() == 0 {
            return Err(Error::InvalidArgument("channel width must be positive".into()));
        }
        if self.levels < 2 {
            return Err(Error::InvalidArgument(format!("levels must be >= 2, got {}", self.levels)));
        }
        let factor = 1usize
            .checked_shl(self.levels as u32 - 1)
            .ok_or_else(|| Error::InvalidArgument(format!("levels {} is too deep", self.levels)))?;
        if self.input_size == 0 || self.input_size % factor != 0 {
            return Err(Error::InvalidArgument(format!(
                "input size {} is not divisible by 2^(levels-1) = {factor}",
                self.input_size
            )));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::InvalidArgument(format!("kernel must be odd, got {}", self.kernel)));
        }
        if !(self.down_kernel == 3 || self.down_kernel == 4) {
            return Err(Error::InvalidArgument(format!("down_kernel must be 3 or 4, got {}", self.down_kernel)));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::InvalidArgument("in/out channels must be positive".into()));
        }
        Ok(())
    }

    /// Feature channels at resolution level `level`.
    pub fn channels(&self, level: usize) -> usize {
        match self.policy {
            ChannelPolicy::Doubling(b) => b << (level as u32).min(self.max_doubling),
            ChannelPolicy::Fixed(w) => w,
        }
    }

    pub fn bottleneck_channels(&self) -> usize {
        self.channels(self.levels - 1)
    }

    /// Spatial size at `level`.
    pub fn size_at(&self, level: usize) -> usize {
        self.input_size >> level
    }

    /// Padding of the stride-2 convolutions so they halve even sizes exactly.
    pub fn down_padding(&self) -> usize {
        if self.down_kernel % 2 == 1 {
            self.down_kernel / 2
        } else {
            self.down_kernel / 2 - 1
        }
    }
}

/// Declarative PatchGAN discriminator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DiscriminatorSpec {
    pub base_channels: usize,
    /// Constant width across layers instead of doubling.
    pub fixed: bool,
    pub in_channels: usize,
    /// Number of stride-2 convolutions before the stride-1 layer and the head.
    pub layers: usize,
    pub kernel: usize,
    pub norm: NormKind,
}

impl DiscriminatorSpec {
    pub const DEFAULT_LAYERS: usize = 3;

    /// Discriminator sized to match a generator: same base width, and constant
    /// width for fixed-policy generators.
    pub fn coupled(generator: &GeneratorSpec, in_channels: usize) -> Self {
        let (base_channels, fixed) = match generator.policy {
            ChannelPolicy::Doubling(b) => (b, false),
            ChannelPolicy::Fixed(w) => (w, true),
        };
        DiscriminatorSpec {
            base_channels,
            fixed,
            in_channels,
            layers: Self::DEFAULT_LAYERS,
            kernel: 4,
            norm: generator.norm,
        }
    }

    /// Discriminator whose width doubles per layer from `base`, whatever the generator.
    pub fn doubling(base: usize, in_channels: usize, norm: NormKind) -> Self {
        DiscriminatorSpec {
            base_channels: base,
            fixed: false,
            in_channels,
            layers: Self::DEFAULT_LAYERS,
            kernel: 4,
            norm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_channels == 0 || self.in_channels == 0 {
            return Err(Error::InvalidArgument("discriminator channels must be positive".into()));
        }
        if self.layers == 0 {
            return Err(Error::InvalidArgument("discriminator needs at least one stride-2 layer".into()));
        }
        if self.kernel < 2 {
            return Err(Error::InvalidArgument("discriminator kernel must be >= 2".into()));
        }
        Ok(())
    }

    /// Output channels of conv layer `i` (0-based, excluding the 1-channel head).
    pub fn channels(&self, i: usize) -> usize {
        if self.fixed {
            self.base_channels
        } else {
            self.base_channels << (i as u32).min(3)
        }
    }
}

/// The nine generator presets, ordered from heaviest to lightest within each policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Preset(u8);

impl TryFrom<String> for Preset {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Preset> for String {
    fn from(p: Preset) -> String {
        p.to_string()
    }
}

impl Preset {
    pub const ALL: [Preset; 9] = [
        Preset(1),
        Preset(2),
        Preset(3),
        Preset(4),
        Preset(5),
        Preset(6),
        Preset(7),
        Preset(8),
        Preset(9),
    ];

    pub fn new(index: u8) -> Result<Self> {
        if (1..=9).contains(&index) {
            Ok(Preset(index))
        } else {
            Err(Error::InvalidArgument(format!("preset index must be 1..=9, got {index}")))
        }
    }

    pub fn index(self) -> u8 {
        self.0
    }

    pub fn policy(self) -> ChannelPolicy {
        match self.0 {
            1 => ChannelPolicy::Doubling(64),
            2 => ChannelPolicy::Doubling(32),
            3 => ChannelPolicy::Doubling(16),
            4 => ChannelPolicy::Doubling(8),
            5 => ChannelPolicy::Fixed(64),
            6 => ChannelPolicy::Doubling(4),
            7 => ChannelPolicy::Fixed(32),
            8 => ChannelPolicy::Fixed(16),
            9 => ChannelPolicy::Fixed(8),
            _ => unreachable!("validated in Preset::new"),
        }
    }

    pub fn generator(self) -> GeneratorSpec {
        GeneratorSpec::new(self.policy())
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "model{}", self.0)
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let digits = s.trim().strip_prefix("model").unwrap_or(s.trim());
        let index = digits
            .parse::<u8>()
            .map_err(|_| Error::Config(format!("unknown model preset {s:?}; expected model1..model9")))?;
        Preset::new(index)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_policies() {
        let fixed: Vec<u8> = Preset::ALL
            .iter()
            .filter(|p| matches!(p.policy(), ChannelPolicy::Fixed(_)))
            .map(|p| p.index())
            .collect();
        assert_eq!(fixed, [5, 7, 8, 9]);
        assert_eq!("model9".parse::<Preset>().unwrap(), Preset(9));
        assert!("model10".parse::<Preset>().is_err());
    }

    #[test]
    fn bottlenecks() {
        assert_eq!(Preset::new(1).unwrap().generator().bottleneck_channels(), 512);
        assert_eq!(Preset::new(6).unwrap().generator().bottleneck_channels(), 32);
        assert_eq!(Preset::new(9).unwrap().generator().bottleneck_channels(), 8);
        let four_level = GeneratorSpec::new(ChannelPolicy::Doubling(64)).with_levels(4);
        assert_eq!(four_level.bottleneck_channels(), 512);
    }

    #[test]
    fn validation() {
        let mut s = GeneratorSpec::new(ChannelPolicy::Fixed(8));
        assert!(s.validate().is_ok());
        s.levels = 1;
        assert!(s.validate().is_err());
        s.levels = 4;
        s.input_size = 100;
        assert!(s.validate().is_err());
        s.input_size = 96;
        assert!(s.validate().is_ok());
    }

    #[test]
    fn policy_round_trip() {
        for p in [ChannelPolicy::Doubling(64), ChannelPolicy::Fixed(8)] {
            assert_eq!(p.to_string().parse::<ChannelPolicy>().unwrap(), p);
        }
        assert!("triple(4)".parse::<ChannelPolicy>().is_err());
    }
}
