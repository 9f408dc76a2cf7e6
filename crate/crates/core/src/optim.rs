//! Adam with explicit, serializable state, and replica gradient averaging.

use std::collections::HashMap;

use candle_core::backprop::GradStore;
use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ParamSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 2e-4, beta1: 0.5, beta2: 0.999, eps: 1e-8 }
    }
}

/// One gradient tensor per parameter, in [`ParamSet::params`] order.
pub type Grads = Vec<Tensor>;

/// Gradients of `params` from a backward pass; unused parameters get zeros.
pub fn collect_grads(params: &ParamSet, store: &GradStore) -> Result<Grads> {
    params
        .params()
        .iter()
        .map(|(_, v)| match store.get(v.as_tensor()) {
            Some(g) => Ok(g.clone()),
            None => Ok(v.as_detached_tensor().zeros_like()?),
        })
        .collect()
}

/// Element-wise arithmetic mean of per-replica gradients.
///
/// Summation is pairwise in replica order, so `N` identical replicas average
/// back to the exact input whenever `N` is a power of two.
pub fn average_gradients(per_replica: &[Grads]) -> Result<Grads> {
    let first = per_replica
        .first()
        .ok_or_else(|| Error::Validation("no replica gradients to average".into()))?;
    for (r, g) in per_replica.iter().enumerate() {
        if g.len() != first.len() || g.iter().zip(first).any(|(a, b)| a.dims() != b.dims()) {
            return Err(Error::Shape(format!("replica {r} gradients do not match replica 0")));
        }
    }
    let n = per_replica.len() as f64;
    (0..first.len())
        .map(|i| {
            let column: Vec<Tensor> = per_replica.iter().map(|g| g[i].clone()).collect();
            Ok((pairwise_sum(column)? / n)?)
        })
        .collect()
}

/// Sums tensors by repeatedly adding adjacent pairs.
pub(crate) fn pairwise_sum(mut items: Vec<Tensor>) -> Result<Tensor> {
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.into_iter();
        while let Some(a) = it.next() {
            next.push(match it.next() {
                Some(b) => (a + b)?,
                None => a,
            });
        }
        items = next;
    }
    Ok(items.pop().expect("non-empty"))
}

/// Adam moments for one parameter set.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamSet) -> Result<Self> {
        let zeros = params
            .params()
            .iter()
            .map(|(_, p)| Ok(p.as_detached_tensor().zeros_like()?))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { config, step: 0, m: zeros.clone(), v: zeros })
    }

    /// Applies one update in place.
    pub fn update(&mut self, params: &ParamSet, grads: &Grads) -> Result<()> {
        if grads.len() != self.m.len() {
            return Err(Error::Shape(format!("{} gradients for {} parameters", grads.len(), self.m.len())));
        }
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (i, (_, p)) in params.params().iter().enumerate() {
            let g = grads[i].detach();
            let m = ((&self.m[i] * beta1)? + (&g * (1.0 - beta1))?)?;
            let v = ((&self.v[i] * beta2)? + (g.sqr()? * (1.0 - beta2))?)?;
            let denom = ((&v / c2)?.sqrt()? + eps)?;
            let delta = ((&m / c1)? / denom)?;
            p.set(&(p.as_detached_tensor() - (delta * lr)?)?)?;
            self.m[i] = m;
            self.v[i] = v;
        }
        Ok(())
    }

    /// Moments keyed `<prefix>.m.<param>` / `<prefix>.v.<param>`.
    pub fn state_tensors(&self, prefix: &str, params: &ParamSet) -> Vec<(String, Tensor)> {
        params
            .params()
            .iter()
            .enumerate()
            .flat_map(|(i, (n, _))| {
                [(format!("{prefix}.m.{n}"), self.m[i].clone()), (format!("{prefix}.v.{n}"), self.v[i].clone())]
            })
            .collect()
    }

    pub fn restore(&mut self, prefix: &str, params: &ParamSet, tensors: &HashMap<String, Tensor>, step: u64) -> Result<()> {
        for (i, (n, p)) in params.params().iter().enumerate() {
            for (kind, slot) in [("m", &mut self.m[i]), ("v", &mut self.v[i])] {
                let key = format!("{prefix}.{kind}.{n}");
                let t = tensors
                    .get(&key)
                    .ok_or_else(|| Error::Checkpoint(format!("optimizer state lacks {key}")))?;
                if t.dims() != p.dims() {
                    return Err(Error::Checkpoint(format!("optimizer tensor {key} has shape {:?}", t.dims())));
                }
                *slot = t.to_dtype(p.dtype())?.to_device(p.device())?;
            }
        }
        self.step = step;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device, Var};

    fn rand_grads(seed: u64) -> Grads {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        vec![
            Tensor::from_vec((0..6).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>(), (2, 3), &Device::Cpu).unwrap(),
            Tensor::from_vec(vec![rng.random_range(-1.0f64..1.0)], 1, &Device::Cpu).unwrap(),
        ]
    }

    fn flat(g: &Grads) -> Vec<f64> {
        g.iter().flat_map(|t| t.flatten_all().unwrap().to_vec1::<f64>().unwrap()).collect()
    }

    #[test]
    fn averaging_degenerate_cases() {
        let g = rand_grads(1);
        assert_eq!(flat(&average_gradients(&vec![g.clone(); 4]).unwrap()), flat(&g));
        let neg: Grads = g.iter().map(|t| t.neg().unwrap()).collect();
        assert!(flat(&average_gradients(&[g.clone(), neg]).unwrap()).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn averaging_matches_scalar_mean() {
        let reps: Vec<Grads> = (0..5).map(rand_grads).collect();
        let got = flat(&average_gradients(&reps).unwrap());
        let cols: Vec<Vec<f64>> = reps.iter().map(flat).collect();
        for (i, v) in got.iter().enumerate() {
            let want = cols.iter().map(|c| c[i]).sum::<f64>() / 5.0;
            assert!((v - want).abs() < 1e-15);
        }
    }

    #[test]
    fn averaging_rejects_shape_mismatch() {
        let mut b = rand_grads(2);
        b.pop();
        assert!(average_gradients(&[rand_grads(1), b]).is_err());
    }

    #[test]
    fn adam_first_step_moves_by_lr_against_gradient_sign() {
        let mut ps = ParamSet::new();
        ps.add_param("w".into(), Var::from_slice(&[1.0f64, -1.0], 2, &Device::Cpu).unwrap());
        let mut adam = Adam::new(AdamConfig::default(), &ps).unwrap();
        let g = vec![Tensor::from_slice(&[0.5f64, -3.0], 2, &Device::Cpu).unwrap()];
        adam.update(&ps, &g).unwrap();
        let w = ps.param("w").unwrap().to_dtype(DType::F64).unwrap().to_vec1::<f64>().unwrap();
        assert!((w[0] - (1.0 - 2e-4)).abs() < 1e-9);
        assert!((w[1] - (-1.0 + 2e-4)).abs() < 1e-9);
    }

    #[test]
    fn adam_minimizes_a_quadratic() {
        let mut ps = ParamSet::new();
        let w = ps.add_param("w".into(), Var::from_slice(&[3.0f64], 1, &Device::Cpu).unwrap());
        let mut adam = Adam::new(AdamConfig { lr: 0.05, ..Default::default() }, &ps).unwrap();
        for _ in 0..500 {
            let loss = w.as_tensor().sqr().unwrap().sum_all().unwrap();
            let g = collect_grads(&ps, &loss.backward().unwrap()).unwrap();
            adam.update(&ps, &g).unwrap();
        }
        assert!(w.to_vec1::<f64>().unwrap()[0].abs() < 1e-2);
    }
}
