//! One supervised step: critics first on detached translations, then both
//! translators jointly against the updated critics.

use candle_core::{DType, Device, Tensor};

use crate::dataset::PatchPair;
use crate::error::{Error, Result};
use crate::losses::{d_loss, gan_loss, l1_loss, neg_log_mean, scalar, translator_objective, LossBundle};
use crate::nn::{apply_norm_stats, Mode, NormTape};
use crate::optim::{average_gradients, collect_grads, Grads};
use crate::nn::layer::NORM_MOMENTUM;
use crate::raster::{stack_tensor, RasterImage};
use crate::trainer::replica::run_replicas;
use crate::trainer::state::TrainState;

/// A stacked `(N, C, H, W)` batch for one replica.
#[derive(Debug, Clone)]
pub struct Batch {
    pub sar: Tensor,
    pub opt: Tensor,
}

impl Batch {
    pub fn from_pairs(pairs: &[&PatchPair], dtype: DType, device: &Device) -> Result<Self> {
        let sar: Vec<_> = pairs.iter().map(|p| &p.sar).collect();
        let opt: Vec<_> = pairs.iter().map(|p| &p.optical).collect();
        Self::from_images(&sar, &opt, dtype, device)
    }

    /// Stacks independent SAR and optical image lists (unpaired use).
    pub fn from_images(sar: &[&RasterImage], opt: &[&RasterImage], dtype: DType, device: &Device) -> Result<Self> {
        Ok(Self { sar: stack_tensor(sar, dtype, device)?, opt: stack_tensor(opt, dtype, device)? })
    }
}

/// Norm statistics recorded by one replica, per network.
#[derive(Debug, Default)]
pub(crate) struct Tapes {
    pub t_a: NormTape,
    pub t_b: NormTape,
    pub d_a: NormTape,
    pub d_b: NormTape,
}

impl Tapes {
    pub(crate) fn merged(mut self, other: Tapes) -> Tapes {
        self.t_a.extend(other.t_a);
        self.t_b.extend(other.t_b);
        self.d_a.extend(other.d_a);
        self.d_b.extend(other.d_b);
        self
    }

    /// Applies the statistics of all replicas (one `Tapes` each).
    pub(crate) fn apply(all: &[Tapes], state: &TrainState) -> Result<()> {
        let nets = &state.nets;
        apply_norm_stats(nets.t_a.params(), &all.iter().map(|t| &t.t_a).collect::<Vec<_>>(), NORM_MOMENTUM)?;
        apply_norm_stats(nets.t_b.params(), &all.iter().map(|t| &t.t_b).collect::<Vec<_>>(), NORM_MOMENTUM)?;
        apply_norm_stats(nets.d_a.params(), &all.iter().map(|t| &t.d_a).collect::<Vec<_>>(), NORM_MOMENTUM)?;
        apply_norm_stats(nets.d_b.params(), &all.iter().map(|t| &t.d_b).collect::<Vec<_>>(), NORM_MOMENTUM)
    }
}

pub(crate) fn take_tape(mode: Mode, into: &mut NormTape) {
    into.extend(mode.into_tape());
}

struct CriticPhase {
    fake_opt: Tensor,
    fake_sar: Tensor,
    d_a: Grads,
    d_b: Grads,
    d_loss_opt: f64,
    d_loss_sar: f64,
    tapes: Tapes,
}

struct TranslatorPhase {
    t_a: Grads,
    t_b: Grads,
    gan: f64,
    l1: f64,
    tapes: Tapes,
}

pub(crate) fn reduce<T>(items: &[T], f: impl Fn(&T) -> &Grads) -> Result<Grads> {
    let g: Vec<Grads> = items.iter().map(|i| f(i).clone()).collect();
    average_gradients(&g)
}

/// Translations produced during the critic phase, kept (with their autograd
/// graphs) for the translator phase of the same step.
pub struct CriticOutcome {
    replicas: Vec<CriticPhase>,
    pub d_loss_opt: f64,
    pub d_loss_sar: f64,
}

/// Phase one: translate, then update both critics on the detached translations.
pub fn critic_phase(state: &mut TrainState, replicas: &[Batch]) -> Result<CriticOutcome> {
    if replicas.is_empty() {
        return Err(Error::Validation("train_step needs at least one replica batch".into()));
    }
    let step = state.global_step + 1;
    let nets = &state.nets;
    let critic = run_replicas(replicas.len(), |r| {
        let b = &replicas[r];
        let mut tapes = Tapes::default();
        let mut m = Mode::train();
        let fake_opt = nets.t_a.forward(&b.sar, &mut m)?;
        take_tape(m, &mut tapes.t_a);
        let mut m = Mode::train();
        let fake_sar = nets.t_b.forward(&b.opt, &mut m)?;
        take_tape(m, &mut tapes.t_b);

        let mut m = Mode::train();
        let loss_a = d_loss(&nets.d_a.forward(&b.opt, &mut m)?, &nets.d_a.forward(&fake_opt.detach(), &mut m)?)?;
        take_tape(m, &mut tapes.d_a);
        let mut m = Mode::train();
        let loss_b = d_loss(&nets.d_b.forward(&b.sar, &mut m)?, &nets.d_b.forward(&fake_sar.detach(), &mut m)?)?;
        take_tape(m, &mut tapes.d_b);

        let store = (&loss_a + &loss_b)?.backward()?;
        Ok(CriticPhase {
            d_a: collect_grads(nets.d_a.params(), &store)?,
            d_b: collect_grads(nets.d_b.params(), &store)?,
            d_loss_opt: scalar(&loss_a)?,
            d_loss_sar: scalar(&loss_b)?,
            fake_opt,
            fake_sar,
            tapes,
        })
    })?;
    let n = critic.len() as f64;
    let d_loss_opt = critic.iter().map(|c| c.d_loss_opt).sum::<f64>() / n;
    let d_loss_sar = critic.iter().map(|c| c.d_loss_sar).sum::<f64>() / n;
    if !(d_loss_opt.is_finite() && d_loss_sar.is_finite()) {
        return Err(Error::NonFinite(format!(
            "step {step}: discriminator losses d_loss_opt={d_loss_opt}, d_loss_sar={d_loss_sar}"
        )));
    }
    if state.config.adversarial {
        let g_a = reduce(&critic, |c| &c.d_a)?;
        let g_b = reduce(&critic, |c| &c.d_b)?;
        state.opt.d_a.update(state.nets.d_a.params(), &g_a)?;
        state.opt.d_b.update(state.nets.d_b.params(), &g_b)?;
    }
    Ok(CriticOutcome { replicas: critic, d_loss_opt, d_loss_sar })
}

/// Phase two: update both translators jointly on the hybrid objective,
/// scored by the already-updated critics; then fold in normalization statistics.
pub fn translator_phase(state: &mut TrainState, replicas: &[Batch], critic: CriticOutcome) -> Result<LossBundle> {
    if replicas.len() != critic.replicas.len() {
        return Err(Error::Validation("replica count changed between step phases".into()));
    }
    let beta = state.config.beta;
    let adversarial = state.config.adversarial;
    let step = state.global_step + 1;
    let nets = &state.nets;
    let trans = run_replicas(replicas.len(), |r| {
        let b = &replicas[r];
        let c = &critic.replicas[r];
        let mut tapes = Tapes::default();
        let l1 = l1_loss(&[(&b.opt, &c.fake_opt), (&b.sar, &c.fake_sar)])?;
        let gan = if adversarial {
            let mut ma = Mode::train();
            let pa = nets.d_a.forward(&c.fake_opt, &mut ma)?;
            take_tape(ma, &mut tapes.d_a);
            let mut mb = Mode::train();
            let pb = nets.d_b.forward(&c.fake_sar, &mut mb)?;
            take_tape(mb, &mut tapes.d_b);
            gan_loss(&[&pa, &pb])?
        } else {
            l1.zeros_like()?
        };
        let total = translator_objective(&gan, &l1, beta)?;
        let store = total.backward()?;
        Ok(TranslatorPhase {
            t_a: collect_grads(nets.t_a.params(), &store)?,
            t_b: collect_grads(nets.t_b.params(), &store)?,
            gan: scalar(&gan)?,
            l1: scalar(&l1)?,
            tapes,
        })
    })?;
    let n = trans.len() as f64;
    let gan = trans.iter().map(|t| t.gan).sum::<f64>() / n;
    let l1 = trans.iter().map(|t| t.l1).sum::<f64>() / n;
    let bundle = LossBundle::new(critic.d_loss_opt, critic.d_loss_sar, gan, l1, beta);
    if !bundle.is_finite() {
        return Err(Error::NonFinite(format!("step {step}: translator losses {bundle:?}")));
    }
    let g_a = reduce(&trans, |t| &t.t_a)?;
    let g_b = reduce(&trans, |t| &t.t_b)?;
    state.opt.t_a.update(state.nets.t_a.params(), &g_a)?;
    state.opt.t_b.update(state.nets.t_b.params(), &g_b)?;

    let tapes: Vec<Tapes> = critic
        .replicas
        .into_iter()
        .zip(trans)
        .map(|(c, t)| c.tapes.merged(t.tapes))
        .collect();
    Tapes::apply(&tapes, state)?;
    state.global_step = step;
    Ok(bundle)
}

/// One full step over `replicas` (one batch per replica worker); returns the
/// replica-mean losses.
pub fn train_step(state: &mut TrainState, replicas: &[Batch]) -> Result<LossBundle> {
    let critic = critic_phase(state, replicas)?;
    translator_phase(state, replicas, critic)
}

/// Mean `-log D(x)` of a critic on a batch, in evaluation mode (diagnostics).
pub fn critic_score(d: &crate::nn::Discriminator, x: &Tensor) -> Result<f64> {
    scalar(&neg_log_mean(&d.forward(x, &mut Mode::Eval)?)?)
}
