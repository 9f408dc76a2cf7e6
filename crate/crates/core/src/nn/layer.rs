//! Convolution layers with optional normalization and activation.

use candle_core::{DType, Device, Tensor, Var, D};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::init::{truncated_normal, INIT_STD};
use crate::nn::params::ParamSet;
use crate::optim::pairwise_sum;

pub const NORM_EPS: f64 = 1e-5;
pub const NORM_MOMENTUM: f64 = 0.1;
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    Conv,
    /// Transposed convolution with padding `(k-1)/2` and output padding
    /// `stride - 1`, so H and W scale exactly by the stride for odd `k`.
    Deconv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Padding {
    /// `p` zeros on every side.
    Symmetric(usize),
    /// Output size equals input size for stride 1: `(k-1)/2` before, the rest after.
    Same,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    LeakyRelu,
    Tanh,
    Sigmoid,
}

/// One row of an architecture table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: Padding,
    pub norm: bool,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn has_bias(&self) -> bool {
        !self.norm
    }

    /// Kernel plus bias scalars.
    pub fn conv_params(&self) -> usize {
        self.kernel * self.kernel * self.in_ch * self.out_ch + if self.has_bias() { self.out_ch } else { 0 }
    }

    /// Normalization scale and offset scalars.
    pub fn norm_params(&self) -> usize {
        if self.norm {
            2 * self.out_ch
        } else {
            0
        }
    }

    /// Output size along one axis.
    pub fn out_size(&self, n: usize) -> usize {
        match (self.kind, self.padding) {
            (LayerKind::Deconv, _) => self.stride * n,
            (LayerKind::Conv, Padding::Same) => (n - 1) / self.stride + 1,
            (LayerKind::Conv, Padding::Symmetric(p)) => (n + 2 * p - self.kernel) / self.stride + 1,
        }
    }

    /// Multiply-add FLOPs (2 per MAC) for one sample with `h × w` input.
    ///
    /// A convolution costs `2·k²·Cin·Cout` per output pixel; a transposed
    /// convolution performs the same per *input* pixel.
    pub fn flops(&self, h: usize, w: usize) -> u64 {
        let per_pixel = 2 * (self.kernel * self.kernel * self.in_ch * self.out_ch) as u64;
        let pixels = match self.kind {
            LayerKind::Conv => self.out_size(h) * self.out_size(w),
            LayerKind::Deconv => h * w,
        };
        per_pixel * pixels as u64
    }

    /// Input index range `[lo, hi]` read by outputs `[a, b]` along one axis
    /// (unbounded domain, no border clipping).
    pub fn input_interval(&self, a: i64, b: i64) -> (i64, i64) {
        let k = self.kernel as i64;
        let s = self.stride as i64;
        match (self.kind, self.padding) {
            (LayerKind::Conv, Padding::Symmetric(p)) => (s * a - p as i64, s * b - p as i64 + k - 1),
            (LayerKind::Conv, Padding::Same) => {
                let before = (k - 1) / 2;
                (s * a - before, s * b - before + k - 1)
            }
            // output o receives input i through tap t when o = s·i - p + t, t ∈ [0, k)
            (LayerKind::Deconv, pad) => {
                let p = match pad {
                    Padding::Symmetric(p) => p as i64,
                    Padding::Same => (k - 1) / 2,
                };
                ((a + p - k + 1 + s - 1).div_euclid(s), (b + p).div_euclid(s))
            }
        }
    }
}

/// Per-layer statistics observed during a training-mode forward pass.
#[derive(Debug, Default, Clone)]
pub struct NormTape {
    records: Vec<(String, Tensor, Tensor)>,
}

impl NormTape {
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn extend(&mut self, other: NormTape) {
        self.records.extend(other.records);
    }
}

/// Normalization behaviour of a forward pass.
#[derive(Debug)]
pub enum Mode {
    /// Running statistics; weights are detached (no autograd graph).
    Eval,
    /// Per-sample statistics, recorded on the tape for the running averages.
    Train(NormTape),
}

impl Mode {
    pub fn train() -> Self {
        Mode::Train(NormTape::default())
    }

    pub fn is_train(&self) -> bool {
        matches!(self, Mode::Train(_))
    }

    pub fn into_tape(self) -> NormTape {
        match self {
            Mode::Eval => NormTape::default(),
            Mode::Train(t) => t,
        }
    }

    fn weight(&self, v: &Var) -> Tensor {
        match self {
            Mode::Eval => v.as_detached_tensor(),
            Mode::Train(_) => v.as_tensor().clone(),
        }
    }
}

#[derive(Debug, Clone)]
struct NormParams {
    gamma: Var,
    beta: Var,
    running_mean: Var,
    running_var: Var,
}

/// A parameterized layer instantiated from a [`LayerSpec`].
#[derive(Debug, Clone)]
pub struct Layer {
    pub spec: LayerSpec,
    weight: Var,
    bias: Option<Var>,
    norm: Option<NormParams>,
}

fn var_from(values: Vec<f64>, shape: &[usize], dtype: DType, device: &Device) -> Result<Var> {
    let t = Tensor::from_vec(values, shape, device)?.to_dtype(dtype)?;
    Ok(Var::from_tensor(&t)?)
}

impl Layer {
    /// Creates the layer's variables (drawing from `rng` in a fixed order) and registers them in `params`.
    pub fn build(spec: LayerSpec, params: &mut ParamSet, rng: &mut ChaCha8Rng, dtype: DType, device: &Device) -> Result<Self> {
        let k = spec.kernel;
        let shape = match spec.kind {
            LayerKind::Conv => [spec.out_ch, spec.in_ch, k, k],
            LayerKind::Deconv => [spec.in_ch, spec.out_ch, k, k],
        };
        let n = shape.iter().product();
        let weight = params.add_param(
            format!("{}.weight", spec.name),
            var_from(truncated_normal(n, 0.0, INIT_STD, rng), &shape, dtype, device)?,
        );
        let bias = if spec.has_bias() {
            Some(params.add_param(format!("{}.bias", spec.name), Var::zeros(spec.out_ch, dtype, device)?))
        } else {
            None
        };
        let norm = if spec.norm {
            let c = spec.out_ch;
            let gamma = var_from(truncated_normal(c, 1.0, INIT_STD, rng), &[c], dtype, device)?;
            Some(NormParams {
                gamma: params.add_param(format!("{}.norm.gamma", spec.name), gamma),
                beta: params.add_param(format!("{}.norm.beta", spec.name), Var::zeros(c, dtype, device)?),
                running_mean: params.add_buffer(format!("{}.norm.running_mean", spec.name), Var::zeros(c, dtype, device)?),
                running_var: params.add_buffer(format!("{}.norm.running_var", spec.name), Var::ones(c, dtype, device)?),
            })
        } else {
            None
        };
        Ok(Self { spec, weight, bias, norm })
    }

    pub fn weight(&self) -> &Var {
        &self.weight
    }

    pub fn forward(&self, x: &Tensor, mode: &mut Mode) -> Result<Tensor> {
        let s = &self.spec;
        let w = mode.weight(&self.weight);
        let mut y = match (s.kind, s.padding) {
            (LayerKind::Conv, Padding::Symmetric(p)) => x.conv2d(&w, p, s.stride, 1, 1)?,
            (LayerKind::Conv, Padding::Same) => {
                let before = (s.kernel - 1) / 2;
                let after = s.kernel - 1 - before;
                x.pad_with_zeros(2, before, after)?
                    .pad_with_zeros(3, before, after)?
                    .conv2d(&w, 0, s.stride, 1, 1)?
            }
            (LayerKind::Deconv, _) => x.conv_transpose2d(&w, (s.kernel - 1) / 2, s.stride - 1, s.stride, 1)?,
        };
        if let Some(b) = &self.bias {
            y = y.broadcast_add(&mode.weight(b).reshape((1, s.out_ch, 1, 1))?)?;
        }
        if let Some(n) = &self.norm {
            y = self.normalize(&y, n, mode)?;
        }
        Ok(match s.activation {
            Activation::LeakyRelu => leaky_relu(&y)?,
            Activation::Tanh => y.tanh()?,
            Activation::Sigmoid => sigmoid(&y)?,
        })
    }

    fn normalize(&self, y: &Tensor, n: &NormParams, mode: &mut Mode) -> Result<Tensor> {
        let c = self.spec.out_ch;
        let gamma = mode.weight(&n.gamma).reshape((1, c, 1, 1))?;
        let beta = mode.weight(&n.beta).reshape((1, c, 1, 1))?;
        let xhat = match mode {
            Mode::Eval => {
                let mean = n.running_mean.as_detached_tensor().reshape((1, c, 1, 1))?;
                let var = n.running_var.as_detached_tensor().reshape((1, c, 1, 1))?;
                y.broadcast_sub(&mean)?.broadcast_div(&(var + NORM_EPS)?.sqrt()?)?
            }
            Mode::Train(tape) => {
                let (_, _, h, w) = y.dims4()?;
                let mean = y.mean_keepdim(D::Minus1)?.mean_keepdim(D::Minus2)?;
                let centered = y.broadcast_sub(&mean)?;
                let var = centered.sqr()?.mean_keepdim(D::Minus1)?.mean_keepdim(D::Minus2)?;
                let hw = (h * w) as f64;
                let unbiased = if hw > 1.0 { hw / (hw - 1.0) } else { 1.0 };
                tape.records.push((
                    self.spec.name.clone(),
                    mean.detach().mean(0)?.flatten_all()?,
                    (var.detach().mean(0)?.flatten_all()? * unbiased)?,
                ));
                centered.broadcast_div(&(var + NORM_EPS)?.sqrt()?)?
            }
        };
        Ok(xhat.broadcast_mul(&gamma)?.broadcast_add(&beta)?)
    }
}

pub fn leaky_relu(x: &Tensor) -> Result<Tensor> {
    Ok(x.ge(0.0)?.where_cond(x, &(x * LEAKY_SLOPE)?)?)
}

/// Logistic function written via `tanh` so that its gradient stays finite when saturated.
pub fn sigmoid(x: &Tensor) -> Result<Tensor> {
    Ok((((x * 0.5)?.tanh()? + 1.0)? * 0.5)?)
}

/// Folds recorded per-sample statistics into the running averages of `params`.
///
/// Each tape is one replica: its records for a layer are averaged first, then
/// replicas are averaged pairwise, so identical replicas reduce exactly.
pub fn apply_norm_stats(params: &ParamSet, tapes: &[&NormTape], momentum: f64) -> Result<()> {
    let mut names: Vec<&str> = Vec::new();
    for tape in tapes {
        for (name, _, _) in &tape.records {
            if !names.contains(&name.as_str()) {
                names.push(name);
            }
        }
    }
    for name in names {
        let (Some(rm), Some(rv)) = (
            params.buffer(&format!("{name}.norm.running_mean")),
            params.buffer(&format!("{name}.norm.running_var")),
        ) else {
            continue;
        };
        let mut means = Vec::new();
        let mut vars = Vec::new();
        for tape in tapes {
            let recs: Vec<_> = tape.records.iter().filter(|(n, _, _)| n == name).collect();
            if recs.is_empty() {
                continue;
            }
            let k = recs.len() as f64;
            let mut m = recs[0].1.clone();
            let mut v = recs[0].2.clone();
            for r in &recs[1..] {
                m = (m + &r.1)?;
                v = (v + &r.2)?;
            }
            means.push((m / k)?);
            vars.push((v / k)?);
        }
        let n = means.len() as f64;
        let mean = (pairwise_sum(means)? / n)?.to_dtype(rm.dtype())?;
        let var = (pairwise_sum(vars)? / n)?.to_dtype(rv.dtype())?;
        rm.set(&((rm.as_detached_tensor() * (1.0 - momentum))? + (mean * momentum)?)?)?;
        rv.set(&((rv.as_detached_tensor() * (1.0 - momentum))? + (var * momentum)?)?)?;
    }
    Ok(())
}
