//! The four networks trained together: two translators and their critics.
//!
//! Direction A maps SAR to optical (`t_a`, judged by the optical critic
//! `d_a`); direction B maps optical to SAR (`t_b`, judged by `d_b`).

use std::collections::HashMap;
use std::path::Path;

use candle_core::{DType, Device};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Discriminator, DiscriminatorConfig, ParamSet, Translator, TranslatorConfig};

pub const OPTICAL_CHANNELS: usize = 3;

/// Translation direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    /// SAR in, optical out (translator A).
    SarToOpt,
    /// Optical in, SAR out (translator B).
    OptToSar,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::SarToOpt, Direction::OptToSar];

    pub fn reverse(self) -> Self {
        match self {
            Direction::SarToOpt => Direction::OptToSar,
            Direction::OptToSar => Direction::SarToOpt,
        }
    }

    /// Short label, e.g. for report titles ("SAR→OPT").
    pub fn label(self) -> &'static str {
        match self {
            Direction::SarToOpt => "SAR->OPT",
            Direction::OptToSar => "OPT->SAR",
        }
    }
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Direction::SarToOpt => "sar2opt",
            Direction::OptToSar => "opt2sar",
        })
    }
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sar2opt" | "sar-to-opt" | "a" => Ok(Direction::SarToOpt),
            "opt2sar" | "opt-to-sar" | "b" => Ok(Direction::OptToSar),
            _ => Err(Error::Validation(format!("unknown direction {s:?} (expected sar2opt or opt2sar)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub translator_a: TranslatorConfig,
    pub translator_b: TranslatorConfig,
    pub discriminator_a: DiscriminatorConfig,
    pub discriminator_b: DiscriminatorConfig,
}

impl ModelConfig {
    /// Full-size networks for `sar_channels`-channel SAR (1 single-pol, 3 Pauli).
    pub fn standard(sar_channels: usize) -> Self {
        Self {
            translator_a: TranslatorConfig::new(sar_channels, OPTICAL_CHANNELS),
            translator_b: TranslatorConfig::new(OPTICAL_CHANNELS, sar_channels),
            discriminator_a: DiscriminatorConfig::new(OPTICAL_CHANNELS),
            discriminator_b: DiscriminatorConfig::new(sar_channels),
        }
    }

    /// Small networks (base width 2, two levels, 16-pixel patches).
    pub fn tiny(sar_channels: usize) -> Self {
        Self {
            translator_a: TranslatorConfig::tiny(sar_channels, OPTICAL_CHANNELS),
            translator_b: TranslatorConfig::tiny(OPTICAL_CHANNELS, sar_channels),
            discriminator_a: DiscriminatorConfig::tiny(OPTICAL_CHANNELS),
            discriminator_b: DiscriminatorConfig::tiny(sar_channels),
        }
    }

    pub fn sar_channels(&self) -> usize {
        self.translator_a.in_channels
    }

    pub fn opt_channels(&self) -> usize {
        self.translator_a.out_channels
    }

    pub fn validate(&self) -> Result<()> {
        self.translator_a.validate()?;
        self.translator_b.validate()?;
        self.discriminator_a.validate()?;
        self.discriminator_b.validate()?;
        let (s, o) = (self.sar_channels(), self.opt_channels());
        if self.translator_b.in_channels != o
            || self.translator_b.out_channels != s
            || self.discriminator_a.in_channels != o
            || self.discriminator_b.in_channels != s
        {
            return Err(Error::Validation(format!(
                "network channel counts are inconsistent with SAR={s}, optical={o}"
            )));
        }
        Ok(())
    }
}

pub const NETWORK_NAMES: [&str; 4] = ["translator_a", "translator_b", "discriminator_a", "discriminator_b"];

#[derive(Debug, Clone)]
pub struct Networks {
    pub t_a: Translator,
    pub t_b: Translator,
    pub d_a: Discriminator,
    pub d_b: Discriminator,
}

impl Networks {
    /// Builds all four networks from independent streams of one seed.
    pub fn build(config: &ModelConfig, seed: u64, dtype: DType, device: &Device) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            t_a: Translator::build(&config.translator_a, seed, 0, dtype, device)?,
            t_b: Translator::build(&config.translator_b, seed, 1, dtype, device)?,
            d_a: Discriminator::build(&config.discriminator_a, seed, 2, dtype, device)?,
            d_b: Discriminator::build(&config.discriminator_b, seed, 3, dtype, device)?,
        })
    }

    pub fn config(&self) -> ModelConfig {
        ModelConfig {
            translator_a: self.t_a.config().clone(),
            translator_b: self.t_b.config().clone(),
            discriminator_a: self.d_a.config().clone(),
            discriminator_b: self.d_b.config().clone(),
        }
    }

    /// Translator for `direction`.
    pub fn translator(&self, direction: Direction) -> &Translator {
        match direction {
            Direction::SarToOpt => &self.t_a,
            Direction::OptToSar => &self.t_b,
        }
    }

    /// Parameter sets in [`NETWORK_NAMES`] order.
    pub fn param_sets(&self) -> [&ParamSet; 4] {
        [self.t_a.params(), self.t_b.params(), self.d_a.params(), self.d_b.params()]
    }

    pub fn deep_clone(&self) -> Result<Self> {
        let out = Self::build(&self.config(), 0, self.t_a.dtype(), &self.t_a.device())?;
        for (dst, src) in out.param_sets().iter().zip(self.param_sets()) {
            dst.copy_from(src)?;
        }
        Ok(out)
    }

    pub fn copy_from(&self, other: &Networks) -> Result<()> {
        for (dst, src) in self.param_sets().iter().zip(other.param_sets()) {
            dst.copy_from(src)?;
        }
        Ok(())
    }

    /// Writes `<name>.safetensors` for each network, with its config in the metadata.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let configs = [
            ("translator", serde_json::to_string(self.t_a.config())?),
            ("translator", serde_json::to_string(self.t_b.config())?),
            ("discriminator", serde_json::to_string(self.d_a.config())?),
            ("discriminator", serde_json::to_string(self.d_b.config())?),
        ];
        for ((name, params), (kind, cfg)) in NETWORK_NAMES.iter().zip(self.param_sets()).zip(configs) {
            let meta = HashMap::from([("kind".to_string(), kind.to_string()), ("config".to_string(), cfg)]);
            params.save(&dir.join(format!("{name}.safetensors")), meta)?;
        }
        Ok(())
    }

    /// Rebuilds networks from the configs stored in `dir` and loads their weights.
    pub fn load(dir: &Path, dtype: DType, device: &Device) -> Result<Self> {
        let meta = |name: &str| -> Result<String> {
            let path = dir.join(format!("{name}.safetensors"));
            if !path.exists() {
                return Err(Error::Checkpoint(format!("{} does not exist", path.display())));
            }
            crate::nn::params::read_archive_metadata(&path)?
                .remove("config")
                .ok_or_else(|| Error::Checkpoint(format!("{} has no config", path.display())))
        };
        let config = ModelConfig {
            translator_a: serde_json::from_str(&meta(NETWORK_NAMES[0])?)?,
            translator_b: serde_json::from_str(&meta(NETWORK_NAMES[1])?)?,
            discriminator_a: serde_json::from_str(&meta(NETWORK_NAMES[2])?)?,
            discriminator_b: serde_json::from_str(&meta(NETWORK_NAMES[3])?)?,
        };
        let nets = Self::build(&config, 0, dtype, device)?;
        for (name, params) in NETWORK_NAMES.iter().zip(nets.param_sets()) {
            params.load(&dir.join(format!("{name}.safetensors")))?;
        }
        Ok(nets)
    }
}
