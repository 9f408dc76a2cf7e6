//! Unsupervised refinement with cyclic loops, starting from supervised weights.
//!
//! Loop 1: `sar → T_A → fake_opt → T_B → cyclic_sar`; loop 2:
//! `opt → T_B → fake_sar → T_A → cyclic_opt`. Translators minimize the
//! adversarial terms on the fakes plus `cycle_weight` times the L1 distance
//! between each cyclic image and its input; critics are trained on real vs.
//! fake exactly as in supervised training. No paired supervision is used.

pub mod refine;

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

pub use refine::{
    cycle_train, load_pretrained, refine_unpaired, run_procedure, run_procedure_unpaired, CycleOutcome, ProcedureReport, RefineOutcome,
};

use crate::error::{Error, Result};
use crate::losses::{d_loss, gan_loss, l1_loss, scalar, translator_objective, LossBundle, DEFAULT_BETA};
use crate::model::Networks;
use crate::nn::{ImageToImage, Mode, NormTape};
use crate::optim::{collect_grads, Grads};
use crate::trainer::replica::run_replicas;
use crate::trainer::step::{reduce, take_tape, Tapes};
use crate::trainer::{Batch, TrainState, TrainerConfig};

/// How the two loops share steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Alternation {
    /// Odd steps: loop 1 updates both translators and `D_A`; even steps:
    /// loop 2 updates both translators and `D_B`.
    PerStep,
    /// Both loops every step.
    Joint,
}

impl std::str::FromStr for Alternation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "per-step" | "per_step" | "alternate" => Ok(Alternation::PerStep),
            "joint" => Ok(Alternation::Joint),
            _ => Err(Error::Validation(format!("unknown alternation {s:?} (expected per-step or joint)"))),
        }
    }
}

impl std::fmt::Display for Alternation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Alternation::PerStep => "per-step",
            Alternation::Joint => "joint",
        })
    }
}

/// Loops contributing to one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Loops {
    pub first: bool,
    pub second: bool,
}

impl Loops {
    pub const BOTH: Loops = Loops { first: true, second: true };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleConfig {
    pub trainer: TrainerConfig,
    /// Weight of the cycle-consistency L1 terms; defaults to the supervised β.
    pub cycle_weight: f64,
    pub alternation: Alternation,
    /// Exemplars of the opposite modality drawn per pass; `None` uses all supplied.
    pub n_unpaired: Option<usize>,
    /// Start refinement from freshly initialized critics instead of the pretrained ones.
    pub reinit_discriminators: bool,
}

impl Default for CycleConfig {
    fn default() -> Self {
        Self {
            trainer: TrainerConfig::default(),
            cycle_weight: DEFAULT_BETA,
            alternation: Alternation::PerStep,
            n_unpaired: None,
            reinit_discriminators: false,
        }
    }
}

impl CycleConfig {
    pub fn validate(&self) -> Result<()> {
        self.trainer.validate()?;
        if !(self.cycle_weight.is_finite() && self.cycle_weight >= 0.0) {
            return Err(Error::Validation(format!("cycle_weight must be finite and >= 0, got {}", self.cycle_weight)));
        }
        if self.n_unpaired == Some(0) {
            return Err(Error::Validation("n_unpaired must be positive".into()));
        }
        Ok(())
    }

    /// Loops active at 1-based `step`.
    pub fn loops_for_step(&self, step: u64) -> Loops {
        match self.alternation {
            Alternation::Joint => Loops::BOTH,
            Alternation::PerStep if step % 2 == 1 => Loops { first: true, second: false },
            Alternation::PerStep => Loops { first: false, second: true },
        }
    }
}

/// Channel-replication stand-in for a translator: passes the input through
/// when channel counts match, replicates a single channel, or keeps the
/// first channel. Used to check the cycle losses in isolation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelStub {
    pub out_channels: usize,
}

impl ImageToImage for ChannelStub {
    fn apply(&self, x: &Tensor, _mode: &mut Mode) -> Result<Tensor> {
        let c = x.dim(1)?;
        Ok(match (c, self.out_channels) {
            (a, b) if a == b => x.clone(),
            (1, b) => x.repeat((1, b, 1, 1))?,
            (_, 1) => x.narrow(1, 0, 1)?,
            (a, b) => return Err(Error::Shape(format!("channel stub cannot map {a} to {b} channels"))),
        })
    }
}

/// Intermediate images of both loops.
#[derive(Debug, Clone)]
pub struct CycleForward {
    pub fake_opt: Tensor,
    pub cyclic_sar: Tensor,
    pub fake_sar: Tensor,
    pub cyclic_opt: Tensor,
}

impl CycleForward {
    /// `(L1(sar, cyclic_sar), L1(opt, cyclic_opt))`.
    pub fn cycle_losses(&self, sar: &Tensor, opt: &Tensor) -> Result<(Tensor, Tensor)> {
        Ok((l1_loss(&[(sar, &self.cyclic_sar)])?, l1_loss(&[(opt, &self.cyclic_opt)])?))
    }
}

/// Runs both loops. In training mode the normalization statistics of each
/// translator (both of its calls) are returned as tapes.
pub fn cycle_forward(
    t_a: &dyn ImageToImage,
    t_b: &dyn ImageToImage,
    sar: &Tensor,
    opt: &Tensor,
    train: bool,
) -> Result<(CycleForward, NormTape, NormTape)> {
    let mode = || if train { Mode::train() } else { Mode::Eval };
    let (mut ma, mut mb) = (mode(), mode());
    let fake_opt = t_a.apply(sar, &mut ma)?;
    let cyclic_sar = t_b.apply(&fake_opt, &mut mb)?;
    let fake_sar = t_b.apply(opt, &mut mb)?;
    let cyclic_opt = t_a.apply(&fake_sar, &mut ma)?;
    Ok((CycleForward { fake_opt, cyclic_sar, fake_sar, cyclic_opt }, ma.into_tape(), mb.into_tape()))
}

/// Loss values of one cycle step; `bundle.l1_loss` is the active cycle term
/// and `bundle.beta` the cycle weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleLosses {
    pub bundle: LossBundle,
    pub cycle_loss_sar: f64,
    pub cycle_loss_opt: f64,
    pub loops: Loops,
}

impl CycleLosses {
    pub const LOG_HEADER: &'static str =
        "step,d_loss_opt,d_loss_sar,gan_loss,l1_loss,total_t_loss,cycle_loss_sar,cycle_loss_opt";

    pub fn log_line(&self, step: u64) -> String {
        format!("{},{:.6},{:.6}", self.bundle.log_line(step), self.cycle_loss_sar, self.cycle_loss_opt)
    }
}

struct CriticPass {
    fwd: CycleForward,
    d_a: Grads,
    d_b: Grads,
    d_loss_opt: f64,
    d_loss_sar: f64,
    tapes: Tapes,
}

struct TranslatorPass {
    t_a: Grads,
    t_b: Grads,
    gan: f64,
    cycle_sar: f64,
    cycle_opt: f64,
    tapes: Tapes,
}

fn critic_pass(nets: &Networks, b: &Batch) -> Result<CriticPass> {
    let (fwd, ta, tb) = cycle_forward(&nets.t_a, &nets.t_b, &b.sar, &b.opt, true)?;
    let mut tapes = Tapes { t_a: ta, t_b: tb, ..Default::default() };
    let mut m = Mode::train();
    let loss_a = d_loss(&nets.d_a.forward(&b.opt, &mut m)?, &nets.d_a.forward(&fwd.fake_opt.detach(), &mut m)?)?;
    take_tape(m, &mut tapes.d_a);
    let mut m = Mode::train();
    let loss_b = d_loss(&nets.d_b.forward(&b.sar, &mut m)?, &nets.d_b.forward(&fwd.fake_sar.detach(), &mut m)?)?;
    take_tape(m, &mut tapes.d_b);
    let store = (&loss_a + &loss_b)?.backward()?;
    Ok(CriticPass {
        d_a: collect_grads(nets.d_a.params(), &store)?,
        d_b: collect_grads(nets.d_b.params(), &store)?,
        d_loss_opt: scalar(&loss_a)?,
        d_loss_sar: scalar(&loss_b)?,
        fwd,
        tapes,
    })
}

fn translator_pass(
    nets: &Networks,
    b: &Batch,
    c: &CriticPass,
    loops: Loops,
    weight: f64,
    adversarial: bool,
) -> Result<TranslatorPass> {
    let mut tapes = Tapes::default();
    let (cyc_sar, cyc_opt) = c.fwd.cycle_losses(&b.sar, &b.opt)?;
    let mut maps = Vec::new();
    if adversarial && loops.first {
        let mut m = Mode::train();
        maps.push(nets.d_a.forward(&c.fwd.fake_opt, &mut m)?);
        take_tape(m, &mut tapes.d_a);
    }
    if adversarial && loops.second {
        let mut m = Mode::train();
        maps.push(nets.d_b.forward(&c.fwd.fake_sar, &mut m)?);
        take_tape(m, &mut tapes.d_b);
    }
    let gan = if maps.is_empty() { cyc_sar.zeros_like()? } else { gan_loss(&maps.iter().collect::<Vec<_>>())? };
    let cycle = match (loops.first, loops.second) {
        (true, true) => (&cyc_sar + &cyc_opt)?,
        (true, false) => cyc_sar.clone(),
        (false, true) => cyc_opt.clone(),
        (false, false) => return Err(Error::Validation("a cycle step needs at least one loop".into())),
    };
    let total = translator_objective(&gan, &cycle, weight)?;
    let store = total.backward()?;
    Ok(TranslatorPass {
        t_a: collect_grads(nets.t_a.params(), &store)?,
        t_b: collect_grads(nets.t_b.params(), &store)?,
        gan: scalar(&gan)?,
        cycle_sar: scalar(&cyc_sar)?,
        cycle_opt: scalar(&cyc_opt)?,
        tapes,
    })
}

/// Gradients of one cycle step at the current weights, without any update.
#[derive(Debug, Clone)]
pub struct CycleGradients {
    pub t_a: Grads,
    pub t_b: Grads,
    pub d_a: Grads,
    pub d_b: Grads,
}

/// Critic and translator gradients of one batch with `loops` active.
pub fn cycle_gradients(nets: &Networks, batch: &Batch, loops: Loops, weight: f64) -> Result<CycleGradients> {
    let c = critic_pass(nets, batch)?;
    let t = translator_pass(nets, batch, &c, loops, weight, true)?;
    Ok(CycleGradients { t_a: t.t_a, t_b: t.t_b, d_a: c.d_a, d_b: c.d_b })
}

/// One cycle step over `replicas` (one unpaired batch each): critics of the
/// active loops first, then both translators against the updated critics.
pub fn cycle_step(state: &mut TrainState, cfg: &CycleConfig, replicas: &[Batch]) -> Result<CycleLosses> {
    if replicas.is_empty() {
        return Err(Error::Validation("cycle_step needs at least one replica batch".into()));
    }
    let step = state.global_step + 1;
    let loops = cfg.loops_for_step(step);
    let adversarial = state.config.adversarial;
    let nets = &state.nets;
    let critic = run_replicas(replicas.len(), |r| critic_pass(nets, &replicas[r]))?;
    let n = critic.len() as f64;
    let d_loss_opt = critic.iter().map(|c| c.d_loss_opt).sum::<f64>() / n;
    let d_loss_sar = critic.iter().map(|c| c.d_loss_sar).sum::<f64>() / n;
    if !(d_loss_opt.is_finite() && d_loss_sar.is_finite()) {
        return Err(Error::NonFinite(format!("cycle step {step}: d_loss_opt={d_loss_opt}, d_loss_sar={d_loss_sar}")));
    }
    if adversarial && loops.first {
        let g = reduce(&critic, |c| &c.d_a)?;
        state.opt.d_a.update(state.nets.d_a.params(), &g)?;
    }
    if adversarial && loops.second {
        let g = reduce(&critic, |c| &c.d_b)?;
        state.opt.d_b.update(state.nets.d_b.params(), &g)?;
    }

    let nets = &state.nets;
    let trans = run_replicas(replicas.len(), |r| {
        translator_pass(nets, &replicas[r], &critic[r], loops, cfg.cycle_weight, adversarial)
    })?;
    let mean = |f: fn(&TranslatorPass) -> f64| trans.iter().map(f).sum::<f64>() / n;
    let (gan, cycle_sar, cycle_opt) = (mean(|t| t.gan), mean(|t| t.cycle_sar), mean(|t| t.cycle_opt));
    let active = if loops.first { cycle_sar } else { 0.0 } + if loops.second { cycle_opt } else { 0.0 };
    let losses = CycleLosses {
        bundle: LossBundle::new(d_loss_opt, d_loss_sar, gan, active, cfg.cycle_weight),
        cycle_loss_sar: cycle_sar,
        cycle_loss_opt: cycle_opt,
        loops,
    };
    if !(losses.bundle.is_finite() && cycle_sar.is_finite() && cycle_opt.is_finite()) {
        return Err(Error::NonFinite(format!("cycle step {step}: translator losses {losses:?}")));
    }
    let g_a = reduce(&trans, |t| &t.t_a)?;
    let g_b = reduce(&trans, |t| &t.t_b)?;
    state.opt.t_a.update(state.nets.t_a.params(), &g_a)?;
    state.opt.t_b.update(state.nets.t_b.params(), &g_b)?;
    let tapes: Vec<Tapes> = critic.into_iter().zip(trans).map(|(c, t)| c.tapes.merged(t.tapes)).collect();
    Tapes::apply(&tapes, state)?;
    state.global_step = step;
    Ok(losses)
}

/// Mean cycle losses `(sar, opt)` over unpaired image lists, in inference mode.
pub fn mean_cycle_loss(nets: &Networks, batches: &[Batch]) -> Result<(f64, f64)> {
    if batches.is_empty() {
        return Err(Error::Validation("no batches to score".into()));
    }
    let mut acc = (0.0, 0.0);
    for b in batches {
        let (fwd, _, _) = cycle_forward(&nets.t_a, &nets.t_b, &b.sar, &b.opt, false)?;
        let (s, o) = fwd.cycle_losses(&b.sar, &b.opt)?;
        acc.0 += scalar(&s)?;
        acc.1 += scalar(&o)?;
    }
    let n = batches.len() as f64;
    Ok((acc.0 / n, acc.1 / n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synthetic::synthetic_pairs;
    use crate::model::ModelConfig;
    use candle_core::{DType, Device};

    fn batch(n: usize, sar_ch: usize, seed: u64, dtype: DType) -> Batch {
        let p = synthetic_pairs(n, 16, sar_ch, seed).unwrap();
        let refs: Vec<_> = p.iter().collect();
        Batch::from_pairs(&refs, dtype, &Device::Cpu).unwrap()
    }

    #[test]
    fn identity_stubs_give_zero_cycle_loss() {
        let b = batch(2, 3, 1, DType::F32);
        let stub = ChannelStub { out_channels: 3 };
        let (fwd, _, _) = cycle_forward(&stub, &stub, &b.sar, &b.opt, false).unwrap();
        let (s, o) = fwd.cycle_losses(&b.sar, &b.opt).unwrap();
        assert_eq!((scalar(&s).unwrap(), scalar(&o).unwrap()), (0.0, 0.0));
        // single-channel SAR: replicate then select is exact on loop 1
        let b = batch(2, 1, 1, DType::F32);
        let (fwd, _, _) =
            cycle_forward(&ChannelStub { out_channels: 3 }, &ChannelStub { out_channels: 1 }, &b.sar, &b.opt, false)
                .unwrap();
        assert_eq!(scalar(&fwd.cycle_losses(&b.sar, &b.opt).unwrap().0).unwrap(), 0.0);
    }

    #[test]
    fn cycle_loss_matches_composed_forward() {
        let nets = Networks::build(&ModelConfig::tiny(1), 4, DType::F64, &Device::Cpu).unwrap();
        let b = batch(2, 1, 2, DType::F64);
        let (fwd, _, _) = cycle_forward(&nets.t_a, &nets.t_b, &b.sar, &b.opt, false).unwrap();
        let (s, _) = fwd.cycle_losses(&b.sar, &b.opt).unwrap();
        let twice = nets.t_b.forward(&nets.t_a.forward(&b.sar, &mut Mode::Eval).unwrap(), &mut Mode::Eval).unwrap();
        let x = b.sar.flatten_all().unwrap().to_vec1::<f64>().unwrap();
        let y = twice.flatten_all().unwrap().to_vec1::<f64>().unwrap();
        let oracle = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).sum::<f64>() / x.len() as f64;
        assert!((scalar(&s).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn per_step_alternation_updates_one_critic() {
        let cfg = CycleConfig::default();
        assert_eq!(cfg.loops_for_step(1), Loops { first: true, second: false });
        assert_eq!(cfg.loops_for_step(2), Loops { first: false, second: true });
        let mut s = TrainState::new(&ModelConfig::tiny(1), &cfg.trainer, DType::F32, &Device::Cpu).unwrap();
        let flat = |p: &crate::nn::ParamSet| {
            p.params().iter().map(|(_, v)| v.flatten_all().unwrap().to_vec1::<f32>().unwrap()).collect::<Vec<_>>()
        };
        let (da, db) = (flat(s.nets.d_a.params()), flat(s.nets.d_b.params()));
        let b = batch(1, 1, 3, DType::F32);
        let l = cycle_step(&mut s, &cfg, std::slice::from_ref(&b)).unwrap();
        assert!(l.loops.first && !l.loops.second);
        assert_ne!(da, flat(s.nets.d_a.params()));
        assert_eq!(db, flat(s.nets.d_b.params()));
        let da = flat(s.nets.d_a.params());
        cycle_step(&mut s, &cfg, &[b]).unwrap();
        assert_eq!(da, flat(s.nets.d_a.params()));
        assert_ne!(db, flat(s.nets.d_b.params()));
        assert!(l.log_line(1).split(',').count() == CycleLosses::LOG_HEADER.split(',').count());
    }

    #[test]
    fn zero_weight_is_pure_adversarial() {
        let nets = Networks::build(&ModelConfig::tiny(1), 6, DType::F64, &Device::Cpu).unwrap();
        let b = batch(1, 1, 4, DType::F64);
        let c = critic_pass(&nets, &b).unwrap();
        let t = translator_pass(&nets, &b, &c, Loops::BOTH, 0.0, true).unwrap();
        let c2 = critic_pass(&nets, &b).unwrap();
        let maps = [nets.d_a.forward(&c2.fwd.fake_opt, &mut Mode::train()).unwrap(),
            nets.d_b.forward(&c2.fwd.fake_sar, &mut Mode::train()).unwrap()];
        let store = gan_loss(&[&maps[0], &maps[1]]).unwrap().backward().unwrap();
        let g = collect_grads(nets.t_a.params(), &store).unwrap();
        for (a, b) in t.t_a.iter().zip(&g) {
            let d = (a - b).unwrap().abs().unwrap().max_all().unwrap().to_scalar::<f64>().unwrap();
            assert!(d < 1e-12);
        }
    }

    #[test]
    fn config_validation() {
        assert!(CycleConfig { cycle_weight: -1.0, ..Default::default() }.validate().is_err());
        assert!(CycleConfig { n_unpaired: Some(0), ..Default::default() }.validate().is_err());
        assert_eq!(CycleConfig::default().cycle_weight, 20.0);
        assert_eq!("joint".parse::<Alternation>().unwrap(), Alternation::Joint);
    }
}
