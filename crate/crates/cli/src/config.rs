//! Run configuration: a TOML file, overridden by command-line flags, persisted
//! next to every command's outputs as `run_config.toml`.
//!
//! ```toml
//! seed = 0                 # drives data split, initialization, data order, FID subsets
//! output_root = "runs"     # SAR2OPT_OUTPUT_ROOT overrides this
//! model = "standard"       # "standard" | "tiny"
//! precision = "f32"        # "f32" | "f64"
//!
//! [data]
//! root = "runs/dataset"    # directory holding manifest.txt
//! pol = "single"           # "single" (amplitude rasters) | "quad" (hh/hv/vh/vv .npy)
//! lambda = 2000.0          # SAR clipping-threshold multiplier
//! tile_size = 256
//! test_fraction = 0.2
//! despeckle = ""           # external command run on each raw SAR raster; "" = none
//!
//! [trainer]
//! learning_rate = 2e-4
//! adam_beta1 = 0.5
//! adam_beta2 = 0.999
//! batch_size = 1
//! beta = 20.0              # L1 weight; 0 = GAN-only
//! adversarial = true       # false = pure-L1 ablation
//! replicas = 1
//! patience = 4
//! max_epochs = 200
//! drop_last = false
//!
//! [cycle]
//! weight = 20.0
//! alternation = "per-step" # "per-step" | "joint"
//! n_unpaired = 0           # exemplars per pass; 0 = all
//! reinit_discriminators = false
//! max_epochs = 50
//! patience = 4
//!
//! [metrics]
//! embedder = "projection"  # "projection" | "inception" (falls back to projection)
//! samples = 0              # FID subset size; 0 = whole split
//! repeats = 1
//! ```

use std::path::{Path, PathBuf};

use anyhow::Context;
use candle_core::DType;
use serde::{Deserialize, Serialize};

use sar2opt_core::cycle::{Alternation, CycleConfig};
use sar2opt_core::dataset::{Despeckle, PrepareConfig};
use sar2opt_core::metrics::EvalConfig;
use sar2opt_core::trainer::TrainerConfig;
use sar2opt_core::ModelConfig;

use crate::ConfigError;

pub const OUTPUT_ROOT_ENV: &str = "SAR2OPT_OUTPUT_ROOT";
pub const RUN_CONFIG_FILE: &str = "run_config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_root: PathBuf,
    pub model: String,
    pub precision: String,
    pub data: DataSection,
    pub trainer: TrainerSection,
    pub cycle: CycleSection,
    pub metrics: MetricsSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Empty means `<output_root>/dataset`.
    pub root: PathBuf,
    pub pol: String,
    pub lambda: f64,
    pub tile_size: usize,
    pub test_fraction: f64,
    pub despeckle: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerSection {
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub batch_size: usize,
    pub beta: f64,
    pub adversarial: bool,
    pub replicas: usize,
    pub patience: u32,
    pub max_epochs: u64,
    pub drop_last: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CycleSection {
    pub weight: f64,
    pub alternation: String,
    pub n_unpaired: usize,
    pub reinit_discriminators: bool,
    pub max_epochs: u64,
    pub patience: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    pub embedder: String,
    pub samples: usize,
    pub repeats: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_root: PathBuf::from("runs"),
            model: "standard".into(),
            precision: "f32".into(),
            data: DataSection::default(),
            trainer: TrainerSection::default(),
            cycle: CycleSection::default(),
            metrics: MetricsSection::default(),
        }
    }
}

impl Default for DataSection {
    fn default() -> Self {
        let p = PrepareConfig::default();
        Self {
            root: PathBuf::new(),
            pol: "single".into(),
            lambda: p.lambda,
            tile_size: p.tile_size,
            test_fraction: p.test_fraction,
            despeckle: String::new(),
        }
    }
}

impl Default for TrainerSection {
    fn default() -> Self {
        let t = TrainerConfig::default();
        Self {
            learning_rate: t.learning_rate,
            adam_beta1: t.adam_beta1,
            adam_beta2: t.adam_beta2,
            batch_size: t.batch_size,
            beta: t.beta,
            adversarial: t.adversarial,
            replicas: t.num_replicas,
            patience: t.early_stop_patience,
            max_epochs: t.max_epochs,
            drop_last: t.drop_last,
        }
    }
}

impl Default for CycleSection {
    fn default() -> Self {
        let c = CycleConfig::default();
        Self {
            weight: c.cycle_weight,
            alternation: c.alternation.to_string(),
            n_unpaired: 0,
            reinit_discriminators: c.reinit_discriminators,
            max_epochs: 50,
            patience: c.trainer.early_stop_patience,
        }
    }
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self { embedder: "projection".into(), samples: 0, repeats: 1 }
    }
}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

impl RunConfig {
    /// Defaults, then the optional file, then the output-root environment variable.
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| config_err(format!("cannot read config {}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| config_err(format!("invalid config {}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(root) = std::env::var_os(OUTPUT_ROOT_ENV).filter(|v| !v.is_empty()) {
            cfg.output_root = PathBuf::from(root);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.model_config(1)?;
        self.dtype()?;
        self.alternation()?;
        self.prepare_config()?;
        self.trainer_config().validate().map_err(|e| config_err(e.to_string()))?;
        self.cycle_config()?.validate().map_err(|e| config_err(e.to_string()))?;
        if self.metrics.repeats == 0 {
            return Err(config_err("metrics.repeats must be at least 1"));
        }
        Ok(())
    }

    pub fn data_root(&self) -> PathBuf {
        if self.data.root.as_os_str().is_empty() {
            self.output_root.join("dataset")
        } else {
            self.data.root.clone()
        }
    }

    /// `explicit`, or `<output_root>/<name>`.
    pub fn output_dir(&self, explicit: Option<&Path>, name: &str) -> PathBuf {
        explicit.map(Path::to_path_buf).unwrap_or_else(|| self.output_root.join(name))
    }

    pub fn model_config(&self, sar_channels: usize) -> anyhow::Result<ModelConfig> {
        match self.model.as_str() {
            "standard" => Ok(ModelConfig::standard(sar_channels)),
            "tiny" => Ok(ModelConfig::tiny(sar_channels)),
            other => Err(config_err(format!("model must be \"standard\" or \"tiny\", got {other:?}"))),
        }
    }

    pub fn dtype(&self) -> anyhow::Result<DType> {
        match self.precision.as_str() {
            "f32" => Ok(DType::F32),
            "f64" => Ok(DType::F64),
            other => Err(config_err(format!("precision must be \"f32\" or \"f64\", got {other:?}"))),
        }
    }

    pub fn quad_pol(&self) -> anyhow::Result<bool> {
        match self.data.pol.as_str() {
            "single" => Ok(false),
            "quad" => Ok(true),
            other => Err(config_err(format!("data.pol must be \"single\" or \"quad\", got {other:?}"))),
        }
    }

    fn alternation(&self) -> anyhow::Result<Alternation> {
        self.cycle.alternation.parse::<Alternation>().map_err(|e| config_err(e.to_string()))
    }

    pub fn prepare_config(&self) -> anyhow::Result<PrepareConfig> {
        self.quad_pol()?;
        let despeckle = self.data.despeckle.trim();
        Ok(PrepareConfig {
            lambda: self.data.lambda,
            tile_size: self.data.tile_size,
            test_fraction: self.data.test_fraction,
            seed: self.seed,
            despeckle: Despeckle::from_command((!despeckle.is_empty()).then_some(despeckle)),
        })
    }

    pub fn trainer_config(&self) -> TrainerConfig {
        let t = &self.trainer;
        TrainerConfig {
            learning_rate: t.learning_rate,
            adam_beta1: t.adam_beta1,
            adam_beta2: t.adam_beta2,
            batch_size: t.batch_size,
            beta: t.beta,
            adversarial: t.adversarial,
            num_replicas: t.replicas,
            early_stop_patience: t.patience,
            max_epochs: t.max_epochs,
            drop_last: t.drop_last,
            seed: self.seed,
            ..TrainerConfig::default()
        }
    }

    pub fn cycle_config(&self) -> anyhow::Result<CycleConfig> {
        let c = &self.cycle;
        Ok(CycleConfig {
            trainer: TrainerConfig { max_epochs: c.max_epochs, early_stop_patience: c.patience, ..self.trainer_config() },
            cycle_weight: c.weight,
            alternation: self.alternation()?,
            n_unpaired: (c.n_unpaired > 0).then_some(c.n_unpaired),
            reinit_discriminators: c.reinit_discriminators,
        })
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            samples: (self.metrics.samples > 0).then_some(self.metrics.samples),
            repeats: self.metrics.repeats,
            seed: self.seed,
        }
    }

    /// Writes the resolved configuration into `dir`.
    pub fn persist(&self, dir: &Path) -> anyhow::Result<PathBuf> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(RUN_CONFIG_FILE);
        let text = toml::to_string_pretty(self).context("serializing run config")?;
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_validate() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = toml::to_string_pretty(&cfg).unwrap();
        assert_eq!(toml::from_str::<RunConfig>(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_file_keeps_other_defaults() {
        let cfg: RunConfig = toml::from_str("seed = 7\n[trainer]\nbeta = 0.0\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.trainer.beta, 0.0);
        assert_eq!(cfg.trainer.patience, 4);
        assert_eq!(cfg.trainer_config().seed, 7);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(toml::from_str::<RunConfig>("sed = 1\n").is_err());
        let cfg = RunConfig { model: "huge".into(), ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg: RunConfig = toml::from_str("[cycle]\nalternation = \"sometimes\"\n").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn zero_means_unset() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.cycle_config().unwrap().n_unpaired, None);
        assert_eq!(cfg.eval_config().samples, None);
    }
}
