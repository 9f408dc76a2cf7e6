//! Training state and its checkpoint directory.
//!
//! ```text
//! <out>/epoch_<k>/translator_a.safetensors   (also translator_b, discriminator_a, discriminator_b)
//! <out>/epoch_<k>/optimizer.safetensors      Adam moments, keyed <network>.{m,v}.<param>
//! <out>/epoch_<k>/state.json                 counters, early-stop record, configs
//! <out>/best                                 text file naming the best epoch directory
//! ```

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, Networks, NETWORK_NAMES};
use crate::nn::params::{read_archive, FORMAT_VERSION};
use crate::optim::Adam;
use crate::trainer::config::TrainerConfig;
use crate::trainer::early_stop::EarlyStop;

pub const STATE_FILE: &str = "state.json";
pub const OPTIMIZER_FILE: &str = "optimizer.safetensors";
pub const BEST_POINTER: &str = "best";

/// Adam state for each of the four networks.
#[derive(Debug, Clone)]
pub struct Optimizers {
    pub t_a: Adam,
    pub t_b: Adam,
    pub d_a: Adam,
    pub d_b: Adam,
}

impl Optimizers {
    pub fn new(config: &TrainerConfig, nets: &Networks) -> Result<Self> {
        let c = config.adam();
        Ok(Self {
            t_a: Adam::new(c, nets.t_a.params())?,
            t_b: Adam::new(c, nets.t_b.params())?,
            d_a: Adam::new(c, nets.d_a.params())?,
            d_b: Adam::new(c, nets.d_b.params())?,
        })
    }

    fn all(&self) -> [&Adam; 4] {
        [&self.t_a, &self.t_b, &self.d_a, &self.d_b]
    }

    fn all_mut(&mut self) -> [&mut Adam; 4] {
        [&mut self.t_a, &mut self.t_b, &mut self.d_a, &mut self.d_b]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StateRecord {
    format_version: String,
    epoch: u64,
    global_step: u64,
    best_epoch: Option<u64>,
    early_stop: EarlyStop,
    optimizer_steps: [u64; 4],
    trainer: TrainerConfig,
    model: ModelConfig,
}

/// Everything needed to continue training. Data order is a pure function of
/// `(config.seed, epoch)`, so no generator state beyond the counters is kept.
#[derive(Debug, Clone)]
pub struct TrainState {
    /// Completed epochs.
    pub epoch: u64,
    pub global_step: u64,
    pub nets: Networks,
    pub opt: Optimizers,
    pub early_stop: EarlyStop,
    pub best_epoch: Option<u64>,
    pub config: TrainerConfig,
}

impl TrainState {
    pub fn new(model: &ModelConfig, config: &TrainerConfig, dtype: DType, device: &Device) -> Result<Self> {
        config.validate()?;
        let nets = Networks::build(model, config.seed, dtype, device)?;
        Self::from_networks(nets, config)
    }

    /// Fresh optimizer and counters around existing (e.g. pretrained) networks.
    pub fn from_networks(nets: Networks, config: &TrainerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            epoch: 0,
            global_step: 0,
            opt: Optimizers::new(config, &nets)?,
            nets,
            early_stop: EarlyStop::new(config.early_stop_patience),
            best_epoch: None,
            config: config.clone(),
        })
    }

    pub fn best_loss(&self) -> Option<f64> {
        self.early_stop.best
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.nets.save(dir)?;
        let mut tensors: Vec<(String, Tensor)> = Vec::new();
        for ((name, adam), params) in NETWORK_NAMES.iter().zip(self.opt.all()).zip(self.nets.param_sets()) {
            tensors.extend(adam.state_tensors(name, params));
        }
        let meta = HashMap::from([("format_version".to_string(), FORMAT_VERSION.to_string())]);
        safetensors::serialize_to_file(tensors, Some(meta), &dir.join(OPTIMIZER_FILE))
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", dir.join(OPTIMIZER_FILE).display())))?;
        let record = StateRecord {
            format_version: FORMAT_VERSION.into(),
            epoch: self.epoch,
            global_step: self.global_step,
            best_epoch: self.best_epoch,
            early_stop: self.early_stop,
            optimizer_steps: self.opt.all().map(|a| a.step),
            trainer: self.config.clone(),
            model: self.nets.config(),
        };
        let path = dir.join(STATE_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(&record)?).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path, dtype: DType, device: &Device) -> Result<Self> {
        let dir = resolve_checkpoint(dir)?;
        let path = dir.join(STATE_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let record: StateRecord = serde_json::from_str(&text)?;
        if record.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "{}: unsupported format version {}",
                path.display(),
                record.format_version
            )));
        }
        let nets = Networks::load(&dir, dtype, device)?;
        if nets.config() != record.model {
            return Err(Error::Checkpoint(format!("{}: network archives disagree with state", dir.display())));
        }
        let mut opt = Optimizers::new(&record.trainer, &nets)?;
        let (tensors, _) = read_archive(&dir.join(OPTIMIZER_FILE))?;
        for (((name, adam), params), step) in NETWORK_NAMES
            .iter()
            .zip(opt.all_mut())
            .zip(nets.param_sets())
            .zip(record.optimizer_steps)
        {
            adam.restore(name, params, &tensors, step)?;
        }
        Ok(Self {
            epoch: record.epoch,
            global_step: record.global_step,
            nets,
            opt,
            early_stop: record.early_stop,
            best_epoch: record.best_epoch,
            config: record.trainer,
        })
    }
}

pub fn epoch_dir(out: &Path, epoch: u64) -> PathBuf {
    out.join(format!("epoch_{epoch}"))
}

/// Records `epoch_<k>` as the best checkpoint under `out`.
pub fn write_best_pointer(out: &Path, epoch: u64) -> Result<()> {
    let path = out.join(BEST_POINTER);
    std::fs::write(&path, format!("epoch_{epoch}\n")).map_err(|e| Error::io(&path, e))
}

/// Accepts a checkpoint directory, a `best` pointer file, or a run directory
/// containing a `best` pointer, and returns the checkpoint directory.
pub fn resolve_checkpoint(path: &Path) -> Result<PathBuf> {
    let path: PathBuf = path.components().collect();
    if path.is_file() {
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let parent = path.parent().unwrap_or(Path::new("."));
        return Ok(parent.join(text.trim()));
    }
    if path.join(STATE_FILE).is_file() || path.join(format!("{}.safetensors", NETWORK_NAMES[0])).is_file() {
        return Ok(path);
    }
    if path.join(BEST_POINTER).is_file() {
        return resolve_checkpoint(&path.join(BEST_POINTER));
    }
    Err(Error::MissingPretrained(path))
}
