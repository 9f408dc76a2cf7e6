//! Patch discriminator: a plain chain of 4×4 convolutions ending in a
//! per-patch probability map.

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::arch::{chain_receptive_field, ArchReport, LayerRow, ParamCount};
use crate::nn::init::network_rng;
use crate::nn::layer::{Activation, Layer, LayerKind, LayerSpec, Mode, Padding};
use crate::nn::params::ParamSet;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    pub in_channels: usize,
    pub kernel_size: usize,
    pub channels: Vec<usize>,
    pub strides: Vec<usize>,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self { in_channels: 3, kernel_size: 4, channels: vec![64, 128, 256, 512, 1], strides: vec![2, 2, 2, 1, 1] }
    }
}

impl DiscriminatorConfig {
    pub fn new(in_channels: usize) -> Self {
        Self { in_channels, ..Self::default() }
    }

    pub fn tiny(in_channels: usize) -> Self {
        Self { in_channels, channels: vec![4, 4, 4, 4, 1], ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.len() != self.strides.len() || self.channels.is_empty() {
            return Err(Error::Validation(format!(
                "discriminator schedules differ in length: {} channels vs {} strides",
                self.channels.len(),
                self.strides.len()
            )));
        }
        if self.in_channels == 0 || self.channels.contains(&0) || self.strides.contains(&0) || self.kernel_size == 0 {
            return Err(Error::Validation("discriminator sizes must be positive".into()));
        }
        if *self.channels.last().expect("non-empty") != 1 {
            return Err(Error::Validation("the last discriminator layer must have one channel".into()));
        }
        Ok(())
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        let n = self.channels.len();
        let mut prev = self.in_channels;
        (0..n)
            .map(|i| {
                let edge = i == 0 || i == n - 1;
                let s = LayerSpec {
                    name: format!("d{i}"),
                    kind: LayerKind::Conv,
                    in_ch: prev,
                    out_ch: self.channels[i],
                    kernel: self.kernel_size,
                    stride: self.strides[i],
                    padding: if self.strides[i] == 1 { Padding::Same } else { Padding::Symmetric(1) },
                    norm: !edge,
                    activation: if i == n - 1 { Activation::Sigmoid } else { Activation::LeakyRelu },
                };
                prev = self.channels[i];
                s
            })
            .collect()
    }

    pub fn receptive_field(&self) -> usize {
        chain_receptive_field(&self.specs())
    }

    pub fn output_size(&self, input: usize) -> usize {
        self.specs().iter().fold(input, |n, s| s.out_size(n))
    }

    pub fn param_count(&self) -> ParamCount {
        ParamCount::of(&self.specs())
    }

    pub fn architecture(&self, size: usize) -> ArchReport {
        let mut n = size;
        let rows = self
            .specs()
            .into_iter()
            .map(|s| {
                let row = LayerRow { in_size: n, out_size: s.out_size(n), flops: s.flops(n, n), spec: s };
                n = row.out_size;
                row
            })
            .collect::<Vec<_>>();
        ArchReport {
            network: format!("discriminator {}", self.in_channels),
            input_size: size,
            encoder_layers: rows.len(),
            decoder_layers: 0,
            rows,
            receptive_field: self.receptive_field(),
            dependency_field: self.receptive_field(),
            params: self.param_count(),
            output_size: n,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Discriminator {
    config: DiscriminatorConfig,
    layers: Vec<Layer>,
    params: ParamSet,
}

impl Discriminator {
    pub fn build(config: &DiscriminatorConfig, seed: u64, stream: u64, dtype: DType, device: &Device) -> Result<Self> {
        config.validate()?;
        let mut rng = network_rng(seed, stream);
        let mut params = ParamSet::new();
        let layers = config
            .specs()
            .into_iter()
            .map(|s| Layer::build(s, &mut params, &mut rng, dtype, device))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { config: config.clone(), layers, params })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// `(N, C, H, W)` image → `(N, 1, H', W')` probabilities in (0, 1).
    pub fn forward(&self, x: &Tensor, mode: &mut Mode) -> Result<Tensor> {
        let (_, c, _, _) = x.dims4()?;
        if c != self.config.in_channels {
            return Err(Error::Shape(format!(
                "discriminator expects {} channels, got {c}",
                self.config.in_channels
            )));
        }
        self.layers.iter().try_fold(x.clone(), |h, l| l.forward(&h, mode))
    }

    pub fn param_count(&self) -> ParamCount {
        self.config.param_count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_architecture_figures() {
        let c = DiscriminatorConfig::default();
        let a = c.architecture(256);
        assert_eq!(a.rows.len(), 5);
        assert_eq!(a.receptive_field, 70);
        assert_eq!(a.output_size, 32);
        assert_eq!(c.output_size(512), 64);
        assert_eq!(c.param_count().conv - 64 - 1, 16 * (3 * 64 + 64 * 128 + 128 * 256 + 256 * 512 + 512));
        assert!((c.param_count().conv as f64 - 2.76e6).abs() / 2.76e6 < 0.05);
    }

    #[test]
    fn forward_shape_and_range() {
        let d = Discriminator::build(&DiscriminatorConfig::tiny(3), 0, 0, DType::F32, &Device::Cpu).unwrap();
        let x = (Tensor::randn(0f32, 3.0, (2, 3, 256, 256), &Device::Cpu).unwrap()).clamp(-1f32, 1f32).unwrap();
        let y = d.forward(&x, &mut Mode::Eval).unwrap();
        assert_eq!(y.dims(), &[2, 1, 32, 32]);
        let v = y.flatten_all().unwrap().to_vec1::<f32>().unwrap();
        assert!(v.iter().all(|p| *p > 0.0 && *p < 1.0));
    }

    #[test]
    fn zeroed_last_layer_gives_one_half() {
        let d = Discriminator::build(&DiscriminatorConfig::tiny(1), 1, 0, DType::F64, &Device::Cpu).unwrap();
        let w = d.params().param("d4.weight").unwrap();
        w.set(&w.as_detached_tensor().zeros_like().unwrap()).unwrap();
        let x = Tensor::ones((1, 1, 32, 32), DType::F64, &Device::Cpu).unwrap();
        let v = d.forward(&x, &mut Mode::Eval).unwrap().flatten_all().unwrap().to_vec1::<f64>().unwrap();
        assert!(v.iter().all(|p| *p == 0.5));
    }

    #[test]
    fn invalid_schedules_and_inputs_are_rejected() {
        let bad = DiscriminatorConfig { strides: vec![2, 2, 1, 1], ..Default::default() };
        assert!(matches!(bad.validate(), Err(Error::Validation(_))));
        let d = Discriminator::build(&DiscriminatorConfig::tiny(3), 0, 0, DType::F32, &Device::Cpu).unwrap();
        let x = Tensor::zeros((1, 1, 32, 32), DType::F32, &Device::Cpu).unwrap();
        assert!(matches!(d.forward(&x, &mut Mode::Eval), Err(Error::Shape(_))));
    }

    #[test]
    fn seeded_initialization_is_reproducible() {
        let build = |s| Discriminator::build(&DiscriminatorConfig::tiny(3), s, 2, DType::F32, &Device::Cpu).unwrap();
        let w = |d: &Discriminator| d.params().params()[0].1.flatten_all().unwrap().to_vec1::<f32>().unwrap();
        assert_eq!(w(&build(4)), w(&build(4)));
        assert_ne!(w(&build(4)), w(&build(5)));
    }
}
