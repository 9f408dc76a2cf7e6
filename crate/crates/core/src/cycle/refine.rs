//! Refinement runs: the cycle training loop, one-direction passes, and the
//! full before/after procedure.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{cycle_step, CycleConfig, CycleLosses};
use crate::dataset::{epoch_permutation, PairSource};
use crate::error::{Error, Result};
use crate::metrics::{compare_sets, refinement_table, Embedder, EvalConfig, MetricReport};
use crate::model::{Direction, Networks};
use crate::raster::{write_npy, write_preview_png, RasterImage};
use crate::trainer::{epoch_dir, resolve_checkpoint, write_best_pointer, Batch, TrainState};

/// Loads pretrained networks; refinement never starts from scratch.
pub fn load_pretrained(path: &Path, dtype: candle_core::DType, device: &candle_core::Device) -> Result<Networks> {
    let dir = resolve_checkpoint(path).map_err(|_| Error::MissingPretrained(path.to_path_buf()))?;
    Networks::load(&dir, dtype, device)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleOutcome {
    pub epochs_run: u64,
    pub stopped_early: bool,
    pub epoch_losses: Vec<f64>,
    /// Inference-mode `(sar, opt)` cycle losses over the training pools before the first step.
    pub initial_cycle_loss: (f64, f64),
    pub final_cycle_loss: (f64, f64),
    pub last_checkpoint: Option<PathBuf>,
    pub best_checkpoint: Option<PathBuf>,
}

fn write_line(log: &mut dyn Write, line: &str) -> Result<()> {
    writeln!(log, "{line}").map_err(|e| Error::External(format!("cycle log: {e}")))
}

/// Index pairs `(sar, opt)` for one epoch: the larger pool is walked once in a
/// fresh permutation, the smaller one cycled in its own permutation.
fn epoch_pairs(ns: usize, no: usize, seed: u64, epoch: u64) -> Vec<(usize, usize)> {
    let ps = epoch_permutation(ns, seed, epoch);
    let po = epoch_permutation(no, seed ^ 0x9e37_79b9_7f4a_7c15, epoch);
    (0..ns.max(no)).map(|i| (ps[i % ns], po[i % no])).collect()
}

fn batches_of(sar: &[RasterImage], opt: &[RasterImage], state: &TrainState) -> Result<Vec<Batch>> {
    let dtype = state.nets.t_a.dtype();
    let device = state.nets.t_a.device();
    let bs = state.config.batch_size;
    (0..sar.len().max(opt.len()))
        .collect::<Vec<_>>()
        .chunks(bs)
        .map(|c| {
            let s: Vec<_> = c.iter().map(|&i| &sar[i % sar.len()]).collect();
            let o: Vec<_> = c.iter().map(|&i| &opt[i % opt.len()]).collect();
            Batch::from_images(&s, &o, dtype, &device)
        })
        .collect()
}

/// Cycle training over unpaired pools until early stop or `max_epochs`.
pub fn cycle_train(
    state: &mut TrainState,
    cfg: &CycleConfig,
    sar: &[RasterImage],
    opt: &[RasterImage],
    out: Option<&Path>,
    log: &mut dyn Write,
) -> Result<CycleOutcome> {
    cfg.validate()?;
    if sar.is_empty() || opt.is_empty() {
        return Err(Error::Validation("cycle training needs nonempty SAR and optical pools".into()));
    }
    let tc = state.config.clone();
    let dtype = state.nets.t_a.dtype();
    let device = state.nets.t_a.device();
    let initial = super::mean_cycle_loss(&state.nets, &batches_of(sar, opt, state)?)?;
    let mut outcome = CycleOutcome {
        epochs_run: 0,
        stopped_early: false,
        epoch_losses: Vec::new(),
        initial_cycle_loss: initial,
        final_cycle_loss: initial,
        last_checkpoint: None,
        best_checkpoint: None,
    };
    if state.global_step == 0 {
        write_line(log, CycleLosses::LOG_HEADER)?;
    }
    while state.epoch < tc.max_epochs {
        let pairs = epoch_pairs(sar.len(), opt.len(), tc.seed, state.epoch);
        let batches: Vec<&[(usize, usize)]> =
            pairs.chunks(tc.batch_size).filter(|c| !tc.drop_last || c.len() == tc.batch_size).collect();
        if batches.is_empty() {
            return Err(Error::Validation("no full batch in the unpaired pools".into()));
        }
        let mut totals = Vec::new();
        for group in batches.chunks(tc.num_replicas) {
            let replicas = group
                .iter()
                .map(|b| {
                    let s: Vec<_> = b.iter().map(|&(i, _)| &sar[i]).collect();
                    let o: Vec<_> = b.iter().map(|&(_, j)| &opt[j]).collect();
                    Batch::from_images(&s, &o, dtype, &device)
                })
                .collect::<Result<Vec<_>>>()?;
            let losses = match cycle_step(state, cfg, &replicas) {
                Ok(l) => l,
                Err(e @ Error::NonFinite(_)) => {
                    if let Some(o) = out {
                        let snap = o.join(format!("nonfinite_step_{}", state.global_step + 1));
                        state.save(&snap)?;
                        log::error!("non-finite cycle loss; state snapshot written to {}", snap.display());
                    }
                    return Err(e);
                }
                Err(e) => return Err(e),
            };
            write_line(log, &losses.log_line(state.global_step))?;
            totals.push(losses.bundle.total_t_loss);
        }
        let mean = totals.iter().sum::<f64>() / totals.len() as f64;
        state.epoch += 1;
        let (improved, stop) = state.early_stop.observe(mean);
        if improved {
            state.best_epoch = Some(state.epoch);
        }
        outcome.epoch_losses.push(mean);
        outcome.epochs_run += 1;
        write_line(log, &format!("# epoch {} mean_total_t_loss={mean:.6} improved={improved}", state.epoch))?;
        if let Some(o) = out {
            let dir = epoch_dir(o, state.epoch);
            state.save(&dir)?;
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
    outcome.final_cycle_loss = super::mean_cycle_loss(&state.nets, &batches_of(sar, opt, state)?)?;
    Ok(outcome)
}

/// Result of one refinement pass.
pub struct RefineOutcome {
    pub direction: Direction,
    pub state: TrainState,
    pub outcome: CycleOutcome,
    /// Translations of every test image by the refined translator.
    pub translated: Vec<RasterImage>,
    pub exemplars_used: usize,
}

fn choose(n_available: usize, n: Option<usize>, seed: u64, stream: u64) -> Result<Vec<usize>> {
    match n {
        None => Ok((0..n_available).collect()),
        Some(k) if k > n_available => Err(Error::Validation(format!(
            "n_unpaired = {k} but only {n_available} exemplars were supplied"
        ))),
        Some(k) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream);
            let mut idx = sample(&mut rng, n_available, k).into_vec();
            idx.sort_unstable();
            Ok(idx)
        }
    }
}

/// One direction pass: cycle-trains a copy of `pretrained` on `test_images`
/// (the modality translated by `direction`) and `exemplars` of the other
/// modality, then translates every test image with the refined translator.
pub fn refine_unpaired(
    pretrained: &Networks,
    cfg: &CycleConfig,
    direction: Direction,
    test_images: &[RasterImage],
    exemplars: &[RasterImage],
    out: Option<&Path>,
    log: &mut dyn Write,
) -> Result<RefineOutcome> {
    cfg.validate()?;
    if exemplars.is_empty() {
        return Err(Error::Validation("empty exemplar set".into()));
    }
    if test_images.is_empty() {
        return Err(Error::Validation("no test images to refine on".into()));
    }
    let picked = choose(exemplars.len(), cfg.n_unpaired, cfg.trainer.seed, 0)?;
    let exemplars: Vec<RasterImage> = picked.iter().map(|&i| exemplars[i].clone()).collect();
    let nets = pretrained.deep_clone()?;
    if cfg.reinit_discriminators {
        let fresh = Networks::build(&nets.config(), cfg.trainer.seed, nets.t_a.dtype(), &nets.t_a.device())?;
        nets.d_a.params().copy_from(fresh.d_a.params())?;
        nets.d_b.params().copy_from(fresh.d_b.params())?;
    }
    let mut state = TrainState::from_networks(nets, &cfg.trainer)?;
    let outcome = match direction {
        Direction::SarToOpt => cycle_train(&mut state, cfg, test_images, &exemplars, out, log)?,
        Direction::OptToSar => cycle_train(&mut state, cfg, &exemplars, test_images, out, log)?,
    };
    let t = state.nets.translator(direction);
    let translated = test_images.iter().map(|im| t.translate(im)).collect::<Result<Vec<_>>>()?;
    Ok(RefineOutcome { direction, state, outcome, translated, exemplars_used: exemplars.len() })
}

/// Before/after reports of the full refinement procedure.
pub struct ProcedureReport {
    /// Supervised (pretrained) scores, `[SAR→OPT, OPT→SAR]`.
    pub before: [MetricReport; 2],
    pub after: [MetricReport; 2],
    pub passes: [CycleOutcome; 2],
    /// Translators and critics of both passes combined into one checkpoint.
    pub refined: Networks,
    pub refined_dir: PathBuf,
    pub table: String,
}

fn save_images(dir: &Path, ids: &[String], images: &[RasterImage]) -> Result<()> {
    for (id, im) in ids.iter().zip(images) {
        write_npy(&dir.join(format!("{id}.npy")), im)?;
        write_preview_png(&dir.join(format!("{id}.png")), im)?;
    }
    Ok(())
}

fn log_file(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

/// Full procedure on `N` co-registered test pairs and a pool of pairs taken
/// from outside the test set: `n` exemplar pairs are drawn from the pool,
/// their pairing is discarded, and [`run_procedure_unpaired`] does the rest.
#[allow(clippy::too_many_arguments)]
pub fn run_procedure(
    pretrained: &Networks,
    cfg: &CycleConfig,
    test: &dyn PairSource,
    pool: &dyn PairSource,
    embedder: &dyn Embedder,
    eval: &EvalConfig,
    dataset: &str,
    out: &Path,
) -> Result<ProcedureReport> {
    cfg.validate()?;
    if pool.is_empty() {
        return Err(Error::Validation("empty exemplar set".into()));
    }
    let test_ids: Vec<&str> = (0..test.len()).map(|i| test.patch_id(i)).collect();
    let picked = choose(pool.len(), cfg.n_unpaired, cfg.trainer.seed, 1)?;
    let mut ex_sar = Vec::with_capacity(picked.len());
    let mut ex_opt = Vec::with_capacity(picked.len());
    for i in picked {
        let p = pool.get(i)?;
        if test_ids.contains(&p.patch_id.as_str()) {
            return Err(Error::Validation(format!("exemplar {} is part of the test set", p.patch_id)));
        }
        ex_sar.push(p.sar);
        ex_opt.push(p.optical);
    }
    // drawing n of the n already drawn keeps all of them
    run_procedure_unpaired(pretrained, cfg, test, &ex_sar, &ex_opt, embedder, eval, dataset, out)
}

/// Full procedure on `N` co-registered test pairs and two independent
/// exemplar sets (SAR and optical, not necessarily of equal size):
/// 1. draw up to `n` exemplars from each set;
/// 2. refine on the `N` test SAR images + optical exemplars, save the
///    translated optical images;
/// 3. refine on the `N` test optical images + SAR exemplars, save the
///    translated SAR images;
/// 4. score both directions before and after against the test ground truth.
///
/// Layout under `out`: `sar2opt/` and `opt2sar/` (checkpoints, `cycle_log.csv`,
/// `translated/`), `refined/` (combined networks), `reports/`, `cycle_config.json`.
#[allow(clippy::too_many_arguments)]
pub fn run_procedure_unpaired(
    pretrained: &Networks,
    cfg: &CycleConfig,
    test: &dyn PairSource,
    exemplar_sar: &[RasterImage],
    exemplar_opt: &[RasterImage],
    embedder: &dyn Embedder,
    eval: &EvalConfig,
    dataset: &str,
    out: &Path,
) -> Result<ProcedureReport> {
    cfg.validate()?;
    if exemplar_sar.is_empty() || exemplar_opt.is_empty() {
        return Err(Error::Validation("empty exemplar set".into()));
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let cfg_path = out.join("cycle_config.json");
    std::fs::write(&cfg_path, serde_json::to_string_pretty(cfg)?).map_err(|e| Error::io(&cfg_path, e))?;

    let test_pairs = (0..test.len()).map(|i| test.get(i)).collect::<Result<Vec<_>>>()?;
    let ids: Vec<String> = test_pairs.iter().map(|p| p.patch_id.clone()).collect();
    let pick = |set: &[RasterImage], stream: u64| -> Result<Vec<RasterImage>> {
        Ok(choose(set.len(), cfg.n_unpaired, cfg.trainer.seed, stream)?.into_iter().map(|i| set[i].clone()).collect())
    };
    let (ex_sar, ex_opt) = (pick(exemplar_sar, 2)?, pick(exemplar_opt, 3)?);
    let (test_sar, test_opt): (Vec<_>, Vec<_>) = test_pairs.into_iter().map(|p| (p.sar, p.optical)).unzip();
    // exemplars are already drawn; passes use all of them
    let pass_cfg = CycleConfig { n_unpaired: None, ..cfg.clone() };

    let run = |direction: Direction, inputs: &[RasterImage], exemplars: &[RasterImage]| -> Result<RefineOutcome> {
        let dir = out.join(direction.to_string());
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut log = log_file(&dir.join("cycle_log.csv"))?;
        let r = refine_unpaired(pretrained, &pass_cfg, direction, inputs, exemplars, Some(&dir), &mut log)?;
        log.flush().map_err(|e| Error::io(dir.join("cycle_log.csv"), e))?;
        save_images(&dir.join("translated"), &ids, &r.translated)?;
        Ok(r)
    };
    let pass_a = run(Direction::SarToOpt, &test_sar, &ex_opt)?;
    let pass_b = run(Direction::OptToSar, &test_opt, &ex_sar)?;

    let before_opt = test_sar.iter().map(|im| pretrained.t_a.translate(im)).collect::<Result<Vec<_>>>()?;
    let before_sar = test_opt.iter().map(|im| pretrained.t_b.translate(im)).collect::<Result<Vec<_>>>()?;
    let score = |reals: &[RasterImage], fakes: &[RasterImage], d: Direction| {
        compare_sets(reals, fakes, embedder, d, dataset, eval)
    };
    let before = [
        score(&test_opt, &before_opt, Direction::SarToOpt)?,
        score(&test_sar, &before_sar, Direction::OptToSar)?,
    ];
    let after = [
        score(&test_opt, &pass_a.translated, Direction::SarToOpt)?,
        score(&test_sar, &pass_b.translated, Direction::OptToSar)?,
    ];
    let reports = out.join("reports");
    for (tag, set) in [("before", &before), ("after", &after)] {
        for r in set.iter() {
            r.write(&reports, &format!("{tag}_{}", r.direction))?;
        }
    }
    let table = refinement_table(&before, &after);
    let table_path = reports.join("refinement.txt");
    std::fs::write(&table_path, &table).map_err(|e| Error::io(&table_path, e))?;

    let refined = pretrained.deep_clone()?;
    refined.t_a.params().copy_from(pass_a.state.nets.t_a.params())?;
    refined.d_a.params().copy_from(pass_a.state.nets.d_a.params())?;
    refined.t_b.params().copy_from(pass_b.state.nets.t_b.params())?;
    refined.d_b.params().copy_from(pass_b.state.nets.d_b.params())?;
    let refined_dir = out.join("refined");
    std::fs::create_dir_all(&refined_dir).map_err(|e| Error::io(&refined_dir, e))?;
    refined.save(&refined_dir)?;
    Ok(ProcedureReport {
        before,
        after,
        passes: [pass_a.outcome, pass_b.outcome],
        refined,
        refined_dir,
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synthetic::synthetic_pairs;
    use crate::model::ModelConfig;
    use crate::trainer::TrainerConfig;
    use candle_core::{DType, Device};

    #[test]
    fn epoch_pairs_cover_both_pools() {
        let p = epoch_pairs(5, 2, 1, 0);
        assert_eq!(p.len(), 5);
        let mut s: Vec<_> = p.iter().map(|x| x.0).collect();
        s.sort();
        assert_eq!(s, vec![0, 1, 2, 3, 4]);
        assert!(p.iter().all(|x| x.1 < 2));
    }

    #[test]
    fn empty_exemplars_and_missing_weights_are_errors() {
        let nets = Networks::build(&ModelConfig::tiny(1), 0, DType::F32, &Device::Cpu).unwrap();
        let imgs: Vec<_> = synthetic_pairs(2, 16, 1, 0).unwrap().into_iter().map(|p| p.sar).collect();
        let r = refine_unpaired(&nets, &CycleConfig::default(), Direction::SarToOpt, &imgs, &[], None, &mut Vec::new());
        assert!(matches!(r, Err(Error::Validation(m)) if m.contains("empty exemplar")));
        let dir = tempfile::tempdir().unwrap();
        let missing = load_pretrained(&dir.path().join("nope"), DType::F32, &Device::Cpu);
        assert!(matches!(missing, Err(Error::MissingPretrained(_))));
    }

    #[test]
    fn n_unpaired_selects_a_subset() {
        let nets = Networks::build(&ModelConfig::tiny(1), 0, DType::F32, &Device::Cpu).unwrap();
        let pairs = synthetic_pairs(4, 16, 1, 1).unwrap();
        let sar: Vec<_> = pairs.iter().map(|p| p.sar.clone()).collect();
        let opt: Vec<_> = pairs.iter().map(|p| p.optical.clone()).collect();
        let cfg = CycleConfig {
            trainer: TrainerConfig { max_epochs: 1, ..Default::default() },
            n_unpaired: Some(2),
            ..Default::default()
        };
        let r = refine_unpaired(&nets, &cfg, Direction::OptToSar, &opt[..2], &sar, None, &mut Vec::new()).unwrap();
        assert_eq!(r.exemplars_used, 2);
        assert_eq!(r.translated.len(), 2);
        assert_eq!(r.translated[0].channels(), 1);
        let too_many = CycleConfig { n_unpaired: Some(9), ..cfg };
        assert!(refine_unpaired(&nets, &too_many, Direction::OptToSar, &opt, &sar, None, &mut Vec::new()).is_err());
    }
}
