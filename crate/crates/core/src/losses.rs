//! Adversarial and reconstruction objectives.
//!
//! All reductions are means over batch and map/pixel elements, so values do
//! not depend on patch or map resolution.

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before taking logs.
pub const PROB_EPS: f64 = 1e-7;
pub const DEFAULT_BETA: f64 = 20.0;

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::Validation(format!("{what}: shapes {:?} and {:?} differ", a.dims(), b.dims())));
    }
    Ok(())
}

fn clamp_prob(p: &Tensor) -> Result<Tensor> {
    Ok(p.clamp(PROB_EPS, 1.0 - PROB_EPS)?)
}

/// `-mean(log p)`.
pub fn neg_log_mean(p: &Tensor) -> Result<Tensor> {
    Ok(clamp_prob(p)?.log()?.mean_all()?.neg()?)
}

/// `-mean(log(1 - p))`.
pub fn neg_log_mean_complement(p: &Tensor) -> Result<Tensor> {
    Ok(clamp_prob(p)?.affine(-1.0, 1.0)?.log()?.mean_all()?.neg()?)
}

/// Discriminator log-loss: `-mean(log real) - mean(log(1 - fake))`.
pub fn d_loss(real_map: &Tensor, fake_map: &Tensor) -> Result<Tensor> {
    same_shape(real_map, fake_map, "d_loss")?;
    Ok((neg_log_mean(real_map)? + neg_log_mean_complement(fake_map)?)?)
}

/// Non-saturating translator loss summed over the maps present: `Σ -mean(log fake)`.
pub fn gan_loss(fake_maps: &[&Tensor]) -> Result<Tensor> {
    sum_terms(fake_maps.iter().map(|m| neg_log_mean(m)))
}

/// Mean absolute difference of each `(true, translated)` pair, summed over pairs.
pub fn l1_loss(pairs: &[(&Tensor, &Tensor)]) -> Result<Tensor> {
    sum_terms(pairs.iter().map(|(a, b)| {
        same_shape(a, b, "l1_loss")?;
        Ok((*a - *b)?.abs()?.mean_all()?)
    }))
}

fn sum_terms(terms: impl Iterator<Item = Result<Tensor>>) -> Result<Tensor> {
    let mut acc: Option<Tensor> = None;
    for t in terms {
        let t = t?;
        acc = Some(match acc {
            None => t,
            Some(a) => (a + t)?,
        });
    }
    acc.ok_or_else(|| Error::Validation("loss over an empty set of terms".into()))
}

/// Hybrid objective `gan + beta · l1`.
pub fn translator_objective(gan: &Tensor, l1: &Tensor, beta: f64) -> Result<Tensor> {
    Ok((gan + (l1 * beta)?)?)
}

/// Scalar loss values of one training step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBundle {
    pub d_loss_opt: f64,
    pub d_loss_sar: f64,
    pub gan_loss: f64,
    pub l1_loss: f64,
    pub total_t_loss: f64,
    pub beta: f64,
}

impl LossBundle {
    /// Combines component values; `total_t_loss = gan_loss + beta · l1_loss`.
    pub fn new(d_loss_opt: f64, d_loss_sar: f64, gan_loss: f64, l1_loss: f64, beta: f64) -> Self {
        Self { d_loss_opt, d_loss_sar, gan_loss, l1_loss, total_t_loss: gan_loss + beta * l1_loss, beta }
    }

    pub fn is_finite(&self) -> bool {
        [self.d_loss_opt, self.d_loss_sar, self.gan_loss, self.l1_loss, self.total_t_loss]
            .iter()
            .all(|v| v.is_finite())
    }

    /// Element-wise mean of several bundles sharing one beta.
    pub fn mean(bundles: &[LossBundle]) -> Option<LossBundle> {
        let first = bundles.first()?;
        let n = bundles.len() as f64;
        let avg = |f: fn(&LossBundle) -> f64| bundles.iter().map(f).sum::<f64>() / n;
        Some(LossBundle::new(
            avg(|b| b.d_loss_opt),
            avg(|b| b.d_loss_sar),
            avg(|b| b.gan_loss),
            avg(|b| b.l1_loss),
            first.beta,
        ))
    }

    pub const LOG_HEADER: &'static str = "step,d_loss_opt,d_loss_sar,gan_loss,l1_loss,total_t_loss";

    pub fn log_line(&self, step: u64) -> String {
        format!(
            "{step},{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.d_loss_opt, self.d_loss_sar, self.gan_loss, self.l1_loss, self.total_t_loss
        )
    }
}

pub fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(candle_core::DType::F64)?.to_scalar::<f64>()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device};
    use proptest::prelude::*;

    fn t(v: &[f64], shape: &[usize]) -> Tensor {
        Tensor::from_slice(v, shape, &Device::Cpu).unwrap()
    }

    fn filled(v: f64) -> Tensor {
        Tensor::full(v, (1, 1, 32, 32), &Device::Cpu).unwrap()
    }

    fn oracle_clamp(p: f64) -> f64 {
        p.clamp(PROB_EPS, 1.0 - PROB_EPS)
    }

    #[test]
    fn d_loss_fixed_points() {
        let half = filled(0.5);
        assert!((scalar(&d_loss(&half, &half).unwrap()).unwrap() - 2.0 * 2f64.ln()).abs() < 1e-12);
        let perfect = scalar(&d_loss(&filled(1.0), &filled(0.0)).unwrap()).unwrap();
        assert!((0.0..1e-6).contains(&perfect));
        assert!(d_loss(&half, &Tensor::zeros((1, 1, 4, 4), DType::F64, &Device::Cpu).unwrap()).is_err());
    }

    #[test]
    fn gan_loss_fixed_points() {
        let one = filled(1.0);
        let half = filled(0.5);
        assert!(scalar(&gan_loss(&[&one, &one]).unwrap()).unwrap() < 1e-6);
        assert!((scalar(&gan_loss(&[&half, &half]).unwrap()).unwrap() - 2.0 * 2f64.ln()).abs() < 1e-12);
        assert!((scalar(&gan_loss(&[&half]).unwrap()).unwrap() - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn saturated_probabilities_stay_finite() {
        let zero = filled(0.0);
        let one = filled(1.0);
        assert!(scalar(&d_loss(&zero, &one).unwrap()).unwrap().is_finite());
        assert!(scalar(&gan_loss(&[&zero]).unwrap()).unwrap().is_finite());
    }

    #[test]
    fn l1_fixed_points() {
        let a = filled(0.25);
        assert_eq!(scalar(&l1_loss(&[(&a, &a)]).unwrap()).unwrap(), 0.0);
        let b = filled(-0.25);
        assert!((scalar(&l1_loss(&[(&a, &b)]).unwrap()).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn bundle_combination() {
        let b = LossBundle::new(0.0, 0.0, 1.0, 0.1, 20.0);
        assert!((b.total_t_loss - 3.0).abs() < 1e-12);
        assert_eq!(LossBundle::new(0.0, 0.0, 1.3, 0.7, 0.0).total_t_loss, 1.3);
        assert_eq!(LossBundle::new(0.0, 0.0, 0.0, 0.7, 20.0).total_t_loss, 14.0);
    }

    #[test]
    fn mean_reduction_is_resolution_invariant() {
        let small = Tensor::full(0.3f64, (1, 1, 4, 4), &Device::Cpu).unwrap();
        let large = filled(0.3);
        let a = scalar(&gan_loss(&[&small]).unwrap()).unwrap();
        let b = scalar(&gan_loss(&[&large]).unwrap()).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn d_loss_matches_loop_oracle(real in prop::collection::vec(0.0f64..=1.0, 16), fake in prop::collection::vec(0.0f64..=1.0, 16)) {
            let got = scalar(&d_loss(&t(&real, &[1, 1, 4, 4]), &t(&fake, &[1, 1, 4, 4])).unwrap()).unwrap();
            let mut sr = 0.0;
            let mut sf = 0.0;
            for i in 0..16 {
                sr += oracle_clamp(real[i]).ln();
                sf += (1.0 - oracle_clamp(fake[i])).ln();
            }
            let want = -sr / 16.0 - sf / 16.0;
            prop_assert!((got - want).abs() <= 1e-6 * want.abs().max(1.0));
        }

        #[test]
        fn l1_matches_loop_oracle(a in prop::collection::vec(-1.0f64..=1.0, 12), b in prop::collection::vec(-1.0f64..=1.0, 12)) {
            let got = scalar(&l1_loss(&[(&t(&a, &[1, 3, 2, 2]), &t(&b, &[1, 3, 2, 2]))]).unwrap()).unwrap();
            let want = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / 12.0;
            prop_assert!((got - want).abs() <= 1e-7);
        }

        #[test]
        fn objective_is_linear_in_beta(gan in 0.0f64..5.0, l1 in 0.0f64..2.0, beta in 0.0f64..50.0) {
            let g = Tensor::new(gan, &Device::Cpu).unwrap();
            let l = Tensor::new(l1, &Device::Cpu).unwrap();
            let t0 = scalar(&translator_objective(&g, &l, 0.0).unwrap()).unwrap();
            let t1 = scalar(&translator_objective(&g, &l, 1.0).unwrap()).unwrap();
            let tb = scalar(&translator_objective(&g, &l, beta).unwrap()).unwrap();
            prop_assert!((tb - (t0 + beta * (t1 - t0))).abs() < 1e-9);
        }
    }
}
