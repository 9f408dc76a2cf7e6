//! Multiscale encoder-decoder translator with skip connections and cascaded
//! input residuals at every decoder level.
//!
//! Channel schedule for `base = b`, `L = num_scales` levels (`w_l = b·2^l`):
//!
//! | layer      | op                          | in → out            |
//! |------------|-----------------------------|---------------------|
//! | `enc0a`    | conv s1, no norm            | in → w0             |
//! | `enc0b`    | conv s1                     | w0 → w0             |
//! | `enc{l}a`  | conv s2 (downsample)        | w_{l-1} → w_{l-1}   |
//! | `enc{l}b`  | conv s1                     | w_{l-1} → w_l       |
//! | `dec{l}a`  | deconv s2 on [h, skip_l]    | 2·w_l → w_{l-1}     |
//! | `dec{l}b`  | conv s1 on [h, pool(x)]     | w_{l-1}+in → w_{l-1}|
//! | `dec0a`    | conv s1 on [h, skip_0]      | 2·w0 → w0           |
//! | `dec0b`    | conv s1 on [h, x], tanh     | w0+in → out         |
//!
//! `dec{L-1}a` reads the bottleneck alone (its skip is itself), so its input
//! is `w_{L-1}`. With the defaults (b = 50, L = 6) this is 12 + 12 layers.

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::arch::{chain_interval, hull, ArchReport, Interval, LayerRow, ParamCount};
use crate::nn::init::network_rng;
use crate::nn::layer::{Activation, Layer, LayerKind, LayerSpec, Mode, Padding};
use crate::nn::params::ParamSet;
use crate::raster::RasterImage;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslatorConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    pub base_feature_maps: usize,
    /// Number of resolution levels; there are `num_scales - 1` downsamplings.
    pub num_scales: usize,
    pub kernel_size: usize,
    pub input_size: usize,
}

impl Default for TranslatorConfig {
    fn default() -> Self {
        Self { in_channels: 1, out_channels: 3, base_feature_maps: 50, num_scales: 6, kernel_size: 3, input_size: 256 }
    }
}

impl TranslatorConfig {
    pub fn new(in_channels: usize, out_channels: usize) -> Self {
        Self { in_channels, out_channels, ..Self::default() }
    }

    /// Small configuration used for gradient checks and smoke training.
    pub fn tiny(in_channels: usize, out_channels: usize) -> Self {
        Self { in_channels, out_channels, base_feature_maps: 2, num_scales: 2, kernel_size: 3, input_size: 16 }
    }

    /// Spatial sizes must be multiples of this.
    pub fn size_multiple(&self) -> usize {
        1 << (self.num_scales.saturating_sub(1))
    }

    pub fn width(&self, level: usize) -> usize {
        self.base_feature_maps << level
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        if self.in_channels == 0 || self.out_channels == 0 {
            return bad("translator channel counts must be positive".into());
        }
        if self.base_feature_maps == 0 {
            return bad("base_feature_maps must be at least 1".into());
        }
        if !(2..=12).contains(&self.num_scales) {
            return bad(format!("num_scales must lie in 2..=12, got {}", self.num_scales));
        }
        if self.kernel_size < 3 || self.kernel_size.is_multiple_of(2) {
            return bad(format!("kernel_size must be odd and ≥ 3, got {}", self.kernel_size));
        }
        if self.input_size == 0 || !self.input_size.is_multiple_of(self.size_multiple()) {
            return bad(format!(
                "input_size {} is not a positive multiple of {}",
                self.input_size,
                self.size_multiple()
            ));
        }
        Ok(())
    }

    fn spec(&self, name: String, kind: LayerKind, in_ch: usize, out_ch: usize, stride: usize) -> LayerSpec {
        LayerSpec {
            name,
            kind,
            in_ch,
            out_ch,
            kernel: self.kernel_size,
            stride,
            padding: Padding::Symmetric(self.kernel_size / 2),
            norm: true,
            activation: Activation::LeakyRelu,
        }
    }

    pub fn encoder_specs(&self) -> Vec<LayerSpec> {
        let c = self.in_channels;
        let mut v = Vec::with_capacity(2 * self.num_scales);
        let mut first = self.spec("enc0a".into(), LayerKind::Conv, c, self.width(0), 1);
        first.norm = false;
        v.push(first);
        v.push(self.spec("enc0b".into(), LayerKind::Conv, self.width(0), self.width(0), 1));
        for l in 1..self.num_scales {
            let (wp, w) = (self.width(l - 1), self.width(l));
            v.push(self.spec(format!("enc{l}a"), LayerKind::Conv, wp, wp, 2));
            v.push(self.spec(format!("enc{l}b"), LayerKind::Conv, wp, w, 1));
        }
        v
    }

    /// Decoder layers in execution order.
    pub fn decoder_specs(&self) -> Vec<LayerSpec> {
        let c = self.in_channels;
        let top = self.num_scales - 1;
        let mut v = Vec::with_capacity(2 * self.num_scales);
        for l in (1..=top).rev() {
            let w = self.width(l);
            let up_in = if l == top { w } else { 2 * w };
            v.push(self.spec(format!("dec{l}a"), LayerKind::Deconv, up_in, self.width(l - 1), 2));
            v.push(self.spec(format!("dec{l}b"), LayerKind::Conv, self.width(l - 1) + c, self.width(l - 1), 1));
        }
        v.push(self.spec("dec0a".into(), LayerKind::Conv, 2 * self.width(0), self.width(0), 1));
        let mut last = self.spec("dec0b".into(), LayerKind::Conv, self.width(0) + c, self.out_channels, 1);
        last.norm = false;
        last.activation = Activation::Tanh;
        v.push(last);
        v
    }

    /// Receptive field of one bottleneck unit on the input.
    pub fn receptive_field(&self) -> usize {
        let (lo, hi) = chain_interval(&self.encoder_specs(), (0, 0));
        (hi - lo + 1) as usize
    }

    /// Largest input extent (one axis) that can influence one output pixel
    /// through any path, over all output phases.
    pub fn dependency_field(&self) -> usize {
        (0..self.size_multiple() as i64)
            .map(|o| {
                let (lo, hi) = self.output_dependency((o, o));
                (hi - lo + 1) as usize
            })
            .max()
            .unwrap_or(0)
    }

    /// Input interval (unbounded domain) read by output interval `out`.
    #[allow(clippy::needless_range_loop)]
    pub fn output_dependency(&self, out: Interval) -> Interval {
        let enc = self.encoder_specs();
        let dec = self.decoder_specs();
        let top = self.num_scales - 1;
        let mut need_x: Option<Interval> = None;
        let mut need_e: Vec<Option<Interval>> = vec![None; self.num_scales];

        let n = dec.len();
        let r = dec[n - 1].input_interval(out.0, out.1);
        need_x = Some(hull(need_x, r));
        let r = dec[n - 2].input_interval(r.0, r.1);
        need_e[0] = Some(hull(need_e[0], r));
        // `h` entering dec0a came out of dec1b
        let mut need_h = r;
        for l in 1..=top {
            let idx = 2 * (top - l);
            let fuse = &dec[idx + 1];
            let up = &dec[idx];
            let r = fuse.input_interval(need_h.0, need_h.1);
            let s = 1i64 << (l - 1);
            need_x = Some(hull(need_x, (r.0 * s, r.1 * s + s - 1)));
            let r = up.input_interval(r.0, r.1);
            need_e[l] = Some(hull(need_e[l], r));
            need_h = r;
        }
        for l in (1..=top).rev() {
            let e = need_e[l].expect("every level is read");
            let r = chain_interval(&enc[2 * l..2 * l + 2], e);
            need_e[l - 1] = Some(hull(need_e[l - 1], r));
        }
        let r = chain_interval(&enc[0..2], need_e[0].expect("level 0 is read"));
        hull(need_x, r)
    }

    pub fn param_count(&self) -> ParamCount {
        ParamCount::of(&self.encoder_specs()) + ParamCount::of(&self.decoder_specs())
    }

    /// Layer table at `size × size` input.
    pub fn architecture(&self, size: usize) -> ArchReport {
        let mut rows = Vec::new();
        for s in self.encoder_specs() {
            let level = enc_level(&s.name);
            let in_size = if s.stride == 2 { size >> (level - 1) } else { size >> level };
            rows.push(LayerRow { in_size, out_size: s.out_size(in_size), flops: s.flops(in_size, in_size), spec: s });
        }
        for s in self.decoder_specs() {
            let level = enc_level(&s.name);
            let in_size = match s.kind {
                LayerKind::Deconv => size >> level,
                LayerKind::Conv if s.name == "dec0a" || s.name == "dec0b" => size,
                LayerKind::Conv => size >> (level - 1),
            };
            rows.push(LayerRow { in_size, out_size: s.out_size(in_size), flops: s.flops(in_size, in_size), spec: s });
        }
        ArchReport {
            network: format!("translator {}->{}", self.in_channels, self.out_channels),
            input_size: size,
            rows,
            encoder_layers: 2 * self.num_scales,
            decoder_layers: 2 * self.num_scales,
            receptive_field: self.receptive_field(),
            dependency_field: self.dependency_field(),
            params: self.param_count(),
            output_size: size,
        }
    }
}

fn enc_level(name: &str) -> usize {
    name[3..name.len() - 1].parse().expect("layer names carry their level")
}

/// A built translator: layers plus their named parameters.
#[derive(Debug, Clone)]
pub struct Translator {
    config: TranslatorConfig,
    encoder: Vec<Layer>,
    decoder: Vec<Layer>,
    params: ParamSet,
}

impl Translator {
    /// Builds with weights drawn from stream `stream` of `seed`.
    pub fn build(config: &TranslatorConfig, seed: u64, stream: u64, dtype: DType, device: &Device) -> Result<Self> {
        config.validate()?;
        let mut rng = network_rng(seed, stream);
        let mut params = ParamSet::new();
        let encoder = config
            .encoder_specs()
            .into_iter()
            .map(|s| Layer::build(s, &mut params, &mut rng, dtype, device))
            .collect::<Result<Vec<_>>>()?;
        let decoder = config
            .decoder_specs()
            .into_iter()
            .map(|s| Layer::build(s, &mut params, &mut rng, dtype, device))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { config: config.clone(), encoder, decoder, params })
    }

    pub fn config(&self) -> &TranslatorConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn layers(&self) -> impl Iterator<Item = &Layer> {
        self.encoder.iter().chain(self.decoder.iter())
    }

    /// Independent copy (fresh parameter storage).
    pub fn deep_clone(&self) -> Result<Self> {
        let params = self.params.deep_clone()?;
        let out = Self::build(&self.config, 0, 0, self.dtype(), &self.device())?;
        out.params.copy_from(&params)?;
        Ok(out)
    }

    pub fn dtype(&self) -> DType {
        self.encoder[0].weight().dtype()
    }

    pub fn device(&self) -> Device {
        self.encoder[0].weight().device().clone()
    }

    /// Checks an `(N, C, H, W)` input against the configuration.
    pub fn check_input(&self, x: &Tensor) -> Result<()> {
        let (_, c, h, w) = x.dims4()?;
        if c != self.config.in_channels {
            return Err(Error::Shape(format!(
                "translator expects {} input channels, got {c}",
                self.config.in_channels
            )));
        }
        let m = self.config.size_multiple();
        if h == 0 || w == 0 || h % m != 0 || w % m != 0 {
            return Err(Error::Shape(format!(
                "input is {h}x{w}; height and width must be positive multiples of {m}"
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor, mode: &mut Mode) -> Result<Tensor> {
        self.check_input(x)?;
        let top = self.config.num_scales - 1;
        // input pyramid for the cascaded residuals
        let mut pyramid = vec![x.clone()];
        for _ in 0..top {
            let next = pyramid.last().expect("non-empty").avg_pool2d(2)?;
            pyramid.push(next);
        }

        let mut skips = Vec::with_capacity(top + 1);
        let mut h = self.encoder[1].forward(&self.encoder[0].forward(x, mode)?, mode)?;
        skips.push(h.clone());
        for l in 1..=top {
            h = self.encoder[2 * l + 1].forward(&self.encoder[2 * l].forward(&h, mode)?, mode)?;
            skips.push(h.clone());
        }

        for l in (1..=top).rev() {
            let idx = 2 * (top - l);
            let inp = if l == top { h } else { Tensor::cat(&[&h, &skips[l]], 1)? };
            let up = self.decoder[idx].forward(&inp, mode)?;
            h = self.decoder[idx + 1].forward(&Tensor::cat(&[&up, &pyramid[l - 1]], 1)?, mode)?;
        }
        let n = self.decoder.len();
        h = self.decoder[n - 2].forward(&Tensor::cat(&[&h, &skips[0]], 1)?, mode)?;
        self.decoder[n - 1].forward(&Tensor::cat(&[&h, x], 1)?, mode)
    }

    /// Inference on a single raster (running normalization statistics).
    pub fn translate(&self, image: &RasterImage) -> Result<RasterImage> {
        let x = image.to_tensor(self.dtype(), &self.device())?;
        let y = self.forward(&x, &mut Mode::Eval)?;
        RasterImage::from_tensor(&y, image.source_tag.clone())
    }

    pub fn param_count(&self) -> ParamCount {
        self.config.param_count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tiny(seed: u64) -> Translator {
        Translator::build(&TranslatorConfig::tiny(1, 3), seed, 0, DType::F64, &Device::Cpu).unwrap()
    }

    fn input(c: usize, h: usize, w: usize, seed: u64) -> Tensor {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..c * h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::from_vec(v, (1, c, h, w), &Device::Cpu).unwrap()
    }

    fn values(t: &Tensor) -> Vec<f64> {
        t.flatten_all().unwrap().to_vec1::<f64>().unwrap()
    }

    #[test]
    fn default_architecture_figures() {
        let a = TranslatorConfig::default().architecture(256);
        assert_eq!((a.encoder_layers, a.decoder_layers), (12, 12));
        assert_eq!(a.rows.len(), 24);
        assert_eq!(a.receptive_field, 191);
        let rel = (a.params.conv as f64 - 53.75e6).abs() / 53.75e6;
        assert!(rel < 0.10, "conv params {}", a.params.conv);
        let pair = a.params.conv + TranslatorConfig::new(3, 1).param_count().conv;
        assert!((pair as f64 - 107.49e6).abs() / 107.49e6 < 0.10);
        assert_eq!(a.params.total(), a.params.conv + a.params.norm);
        // widths double per downsampling and halve per upsampling
        let widths: Vec<usize> = a.rows[..12].iter().map(|r| r.spec.out_ch).collect();
        assert_eq!(widths, [50, 50, 50, 100, 100, 200, 200, 400, 400, 800, 800, 1600]);
        let up: Vec<usize> = a.rows[12..].iter().step_by(2).map(|r| r.spec.out_ch).collect();
        assert_eq!(up, [800, 400, 200, 100, 50, 50]);
    }

    #[test]
    fn built_parameter_count_matches_table() {
        let t = tiny(0);
        assert_eq!(t.params().num_scalars(), t.param_count().total());
    }

    #[test]
    fn forward_shapes_and_range() {
        let t = tiny(1);
        for (h, w) in [(16, 16), (32, 48)] {
            let y = t.forward(&(input(1, h, w, 2) * 50.0).unwrap(), &mut Mode::Eval).unwrap();
            assert_eq!(y.dims(), &[1, 3, h, w]);
            assert!(values(&y).iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn non_divisible_size_is_a_shape_error() {
        let t = Translator::build(&TranslatorConfig::default(), 0, 0, DType::F32, &Device::Cpu);
        let t = t.unwrap();
        let err = t.forward(&Tensor::zeros((1, 1, 48, 40), DType::F32, &Device::Cpu).unwrap(), &mut Mode::Eval);
        match err {
            Err(Error::Shape(m)) => assert!(m.contains("multiples of 32"), "{m}"),
            other => panic!("expected shape error, got {other:?}"),
        }
        assert!(TranslatorConfig { input_size: 250, ..Default::default() }.validate().is_err());
        assert!(TranslatorConfig { base_feature_maps: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn seeded_initialization_is_reproducible() {
        let same = |a: &Translator, b: &Translator| {
            a.params().params().iter().zip(b.params().params()).all(|((_, x), (_, y))| values(x) == values(y))
        };
        assert!(same(&tiny(7), &tiny(7)));
        assert!(!same(&tiny(7), &tiny(8)));
    }

    #[test]
    fn zero_head_gives_zero_output() {
        let t = tiny(3);
        let head = t.params().param("dec0b.weight").unwrap();
        head.set(&head.as_detached_tensor().zeros_like().unwrap()).unwrap();
        let y = t.forward(&input(1, 16, 16, 4), &mut Mode::Eval).unwrap();
        assert!(values(&y).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn inference_is_deterministic() {
        let x = input(1, 16, 16, 9);
        let a = values(&tiny(2).forward(&x, &mut Mode::Eval).unwrap());
        let b = values(&tiny(2).forward(&x, &mut Mode::Eval).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn dependency_field_covers_every_path() {
        let c = TranslatorConfig::tiny(1, 3);
        assert!(c.dependency_field() >= c.receptive_field());
        // The brute-force dependency extent of one output column of a built
        // network never exceeds the analytic one.
        let t = tiny(5);
        let n = 64usize;
        let base = Tensor::zeros((1, 1, n, n), DType::F64, &Device::Cpu).unwrap();
        let y0 = t.forward(&base, &mut Mode::Eval).unwrap();
        for o in [30usize, 31] {
            let (lo, hi) = c.output_dependency((o as i64, o as i64));
            let mut deps = Vec::new();
            for i in 0..n {
                let mut v = vec![0.0f64; n * n];
                for r in 0..n {
                    v[r * n + i] = 0.5;
                }
                let x = Tensor::from_vec(v, (1, 1, n, n), &Device::Cpu).unwrap();
                let d = (t.forward(&x, &mut Mode::Eval).unwrap() - &y0).unwrap().abs().unwrap();
                let col: f64 = d.narrow(3, o, 1).unwrap().sum_all().unwrap().to_scalar().unwrap();
                if col > 0.0 {
                    deps.push(i as i64);
                }
            }
            assert_eq!((deps[0], *deps.last().unwrap()), (lo, hi));
        }
    }

    #[test]
    fn archive_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.safetensors");
        let a = tiny(1);
        a.params().save(&path, Default::default()).unwrap();
        let b = tiny(2);
        b.params().load(&path).unwrap();
        let x = input(1, 16, 16, 3);
        assert_eq!(values(&a.forward(&x, &mut Mode::Eval).unwrap()), values(&b.forward(&x, &mut Mode::Eval).unwrap()));
        let wrong = Translator::build(&TranslatorConfig::tiny(3, 1), 0, 0, DType::F64, &Device::Cpu).unwrap();
        assert!(wrong.params().load(&path).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn interior_is_shift_equivariant(seed in 0u64..1000, k in 1usize..3) {
            // shifting by a multiple of the size multiple shifts the output on
            // pixels whose dependency window stays inside both crops
            let t = tiny(seed);
            let c = t.config().clone();
            let shift = k * c.size_multiple();
            let n = 48usize;
            let big = input(1, n + shift, n + shift, seed + 1);
            let a = t.forward(&big.narrow(2, 0, n).unwrap().narrow(3, 0, n).unwrap(), &mut Mode::Eval).unwrap();
            let b = t.forward(&big.narrow(2, shift, n).unwrap().narrow(3, shift, n).unwrap(), &mut Mode::Eval).unwrap();
            let halo = c.dependency_field() / 2 + 1;
            let m = n - shift - 2 * halo;
            let a_in = a.narrow(2, shift + halo, m).unwrap().narrow(3, shift + halo, m).unwrap();
            let b_in = b.narrow(2, halo, m).unwrap().narrow(3, halo, m).unwrap();
            let diff = (a_in - b_in).unwrap().abs().unwrap().max_all().unwrap().to_scalar::<f64>().unwrap();
            prop_assert!(diff < 1e-12, "max diff {}", diff);
        }
    }
}
