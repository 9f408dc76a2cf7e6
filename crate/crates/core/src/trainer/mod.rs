//! Supervised adversarial training: step, epoch loop, early stopping and checkpoints.

pub mod compute;
pub mod config;
pub mod early_stop;
pub mod replica;
pub mod state;
pub mod step;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub use compute::{compute_report, ComputeReport};
pub use config::TrainerConfig;
pub use early_stop::{epochs_until_stop, EarlyStop};
pub use state::{epoch_dir, resolve_checkpoint, write_best_pointer, TrainState};
pub use step::{train_step, Batch};

use crate::dataset::{BatchLoader, PairSource};
use crate::error::{Error, Result};
use crate::losses::LossBundle;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub epochs_run: u64,
    pub stopped_early: bool,
    pub epoch_losses: Vec<f64>,
    pub last_checkpoint: Option<PathBuf>,
    pub best_checkpoint: Option<PathBuf>,
    pub samples_per_second: f64,
}

fn log_line(log: &mut dyn Write, line: &str) -> Result<()> {
    writeln!(log, "{line}").map_err(|e| Error::External(format!("training log: {e}")))
}

/// Groups one epoch's batches into steps of up to `num_replicas` batches.
pub fn epoch_steps(loader: &BatchLoader, n: usize, epoch: u64, replicas: usize) -> Result<Vec<Vec<Vec<usize>>>> {
    let batches = loader.epoch_batches(n, epoch)?;
    Ok(batches.chunks(replicas).map(<[Vec<usize>]>::to_vec).collect())
}

/// Trains until `max_epochs` or early stop. With `out`, saves `epoch_<k>/`
/// after every epoch and keeps the `best` pointer on the lowest epoch-mean
/// translator loss.
pub fn train(state: &mut TrainState, source: &dyn PairSource, out: Option<&Path>, log: &mut dyn Write) -> Result<TrainOutcome> {
    state.config.validate()?;
    if source.is_empty() {
        return Err(Error::Validation("training split is empty".into()));
    }
    let cfg = state.config.clone();
    let loader = BatchLoader::new(cfg.batch_size, cfg.drop_last, cfg.seed)?;
    let dtype = state.nets.t_a.dtype();
    let device = state.nets.t_a.device();
    let mut outcome = TrainOutcome {
        epochs_run: 0,
        stopped_early: false,
        epoch_losses: Vec::new(),
        last_checkpoint: None,
        best_checkpoint: out.and_then(|o| state.best_epoch.map(|e| epoch_dir(o, e))),
        samples_per_second: 0.0,
    };
    if state.global_step == 0 {
        log_line(log, LossBundle::LOG_HEADER)?;
    }
    let started = Instant::now();
    let mut samples = 0usize;
    while state.epoch < cfg.max_epochs {
        let epoch = state.epoch;
        let steps = epoch_steps(&loader, source.len(), epoch, cfg.num_replicas)?;
        if steps.is_empty() {
            return Err(Error::Validation("no full batch in the training split".into()));
        }
        let mut totals = Vec::with_capacity(steps.len());
        for group in steps {
            let batches = group
                .iter()
                .map(|idx| {
                    let pairs = idx.iter().map(|&i| source.get(i)).collect::<Result<Vec<_>>>()?;
                    samples += pairs.len();
                    Batch::from_pairs(&pairs.iter().collect::<Vec<_>>(), dtype, &device)
                })
                .collect::<Result<Vec<_>>>()?;
            let bundle = match train_step(state, &batches) {
                Ok(b) => b,
                Err(e @ Error::NonFinite(_)) => {
                    if let Some(o) = out {
                        let snap = o.join(format!("nonfinite_step_{}", state.global_step + 1));
                        state.save(&snap)?;
                        log::error!("non-finite loss; state snapshot written to {}", snap.display());
                    }
                    return Err(e);
                }
                Err(e) => return Err(e),
            };
            log_line(log, &bundle.log_line(state.global_step))?;
            totals.push(bundle.total_t_loss);
        }
        let mean = totals.iter().sum::<f64>() / totals.len() as f64;
        state.epoch += 1;
        let (improved, stop) = state.early_stop.observe(mean);
        if improved {
            state.best_epoch = Some(state.epoch);
        }
        outcome.epoch_losses.push(mean);
        outcome.epochs_run += 1;
        log_line(
            log,
            &format!("# epoch {} mean_total_t_loss={mean:.6} improved={improved}", state.epoch),
        )?;
        if let Some(o) = out {
            let dir = epoch_dir(o, state.epoch);
            state.save(&dir).map_err(|e| match &outcome.last_checkpoint {
                Some(p) => Error::Checkpoint(format!("{e}; last good checkpoint: {}", p.display())),
                None => e,
            })?;
            if improved {
                write_best_pointer(o, state.epoch)?;
                outcome.best_checkpoint = Some(dir.clone());
            }
            outcome.last_checkpoint = Some(dir);
        }
        if stop {
            outcome.stopped_early = true;
            break;
        }
    }
    let secs = started.elapsed().as_secs_f64();
    outcome.samples_per_second = if secs > 0.0 { samples as f64 / secs } else { 0.0 };
    Ok(outcome)
}
