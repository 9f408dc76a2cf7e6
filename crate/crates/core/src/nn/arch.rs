//! Architecture introspection: layer tables, receptive fields, parameter and FLOP totals.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::nn::layer::{LayerKind, LayerSpec};

pub type Interval = (i64, i64);

pub fn hull(a: Option<Interval>, b: Interval) -> Interval {
    match a {
        None => b,
        Some(a) => (a.0.min(b.0), a.1.max(b.1)),
    }
}

/// Receptive field (pixels along one axis) of a plain chain of layers.
pub fn chain_receptive_field(layers: &[LayerSpec]) -> usize {
    let (lo, hi) = chain_interval(layers, (0, 0));
    (hi - lo + 1) as usize
}

/// Input interval read by output interval `out` of a chain of layers.
pub fn chain_interval(layers: &[LayerSpec], out: Interval) -> Interval {
    layers.iter().rev().fold(out, |(a, b), l| l.input_interval(a, b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCount {
    /// Convolution / transposed-convolution kernels and biases.
    pub conv: usize,
    /// Normalization scales and offsets.
    pub norm: usize,
}

impl ParamCount {
    pub fn total(&self) -> usize {
        self.conv + self.norm
    }

    pub fn of(specs: &[LayerSpec]) -> Self {
        Self {
            conv: specs.iter().map(LayerSpec::conv_params).sum(),
            norm: specs.iter().map(LayerSpec::norm_params).sum(),
        }
    }
}

impl std::ops::Add for ParamCount {
    type Output = ParamCount;
    fn add(self, o: ParamCount) -> ParamCount {
        ParamCount { conv: self.conv + o.conv, norm: self.norm + o.norm }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRow {
    pub spec: LayerSpec,
    pub in_size: usize,
    pub out_size: usize,
    pub flops: u64,
}

/// Audit table for one network at a given square input size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchReport {
    pub network: String,
    pub input_size: usize,
    pub rows: Vec<LayerRow>,
    /// Layers on the contracting path (all layers for a plain chain).
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    /// Receptive field of the deepest (bottleneck / output) unit.
    pub receptive_field: usize,
    /// Input extent that can influence a single output pixel through any path.
    pub dependency_field: usize,
    pub params: ParamCount,
    pub output_size: usize,
}

impl ArchReport {
    pub fn flops(&self) -> u64 {
        self.rows.iter().map(|r| r.flops).sum()
    }
}

impl fmt::Display for ArchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} @ {}x{}", self.network, self.input_size, self.input_size)?;
        writeln!(
            f,
            "{:<10} {:<6} {:>5} {:>5} {:>2} {:>2} {:>4} {:>9} {:>6} {:>11} {:>15}",
            "layer", "kind", "in", "out", "k", "s", "norm", "act", "size", "conv params", "FLOPs"
        )?;
        for r in &self.rows {
            let s = &r.spec;
            writeln!(
                f,
                "{:<10} {:<6} {:>5} {:>5} {:>2} {:>2} {:>4} {:>9} {:>6} {:>11} {:>15}",
                s.name,
                match s.kind {
                    LayerKind::Conv => "conv",
                    LayerKind::Deconv => "deconv",
                },
                s.in_ch,
                s.out_ch,
                s.kernel,
                s.stride,
                if s.norm { "yes" } else { "no" },
                format!("{:?}", s.activation),
                r.out_size,
                s.conv_params(),
                r.flops
            )?;
        }
        writeln!(f, "layers: encoder {} decoder {}", self.encoder_layers, self.decoder_layers)?;
        writeln!(f, "receptive field: {}", self.receptive_field)?;
        writeln!(f, "dependency field: {}", self.dependency_field)?;
        writeln!(f, "output size: {}", self.output_size)?;
        writeln!(
            f,
            "params: conv {} norm {} total {}",
            self.params.conv,
            self.params.norm,
            self.params.total()
        )?;
        write!(f, "forward FLOPs/sample: {}", self.flops())
    }
}
