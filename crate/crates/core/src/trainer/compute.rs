//! Parameter, FLOP and throughput accounting.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::ModelConfig;
use crate::nn::ParamCount;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkCompute {
    pub name: String,
    pub params: ParamCount,
    /// Convolution multiply-add FLOPs for one forward pass.
    pub flops: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComputeReport {
    pub sample_size: usize,
    pub networks: Vec<NetworkCompute>,
    pub samples_per_second: Option<f64>,
    pub replicas: usize,
}

impl ComputeReport {
    fn sum(&self, prefix: &str) -> (ParamCount, u64) {
        self.networks
            .iter()
            .filter(|n| n.name.starts_with(prefix))
            .fold((ParamCount { conv: 0, norm: 0 }, 0), |(p, f), n| (p + n.params, f + n.flops))
    }

    pub fn translator_pair(&self) -> (ParamCount, u64) {
        self.sum("translator")
    }

    pub fn discriminator_pair(&self) -> (ParamCount, u64) {
        self.sum("discriminator")
    }
}

/// Static accounting for the four networks at `sample_size × sample_size` input.
pub fn compute_report(model: &ModelConfig, sample_size: usize, replicas: usize, samples_per_second: Option<f64>) -> ComputeReport {
    let archs = [
        ("translator_a", model.translator_a.architecture(sample_size)),
        ("translator_b", model.translator_b.architecture(sample_size)),
        ("discriminator_a", model.discriminator_a.architecture(sample_size)),
        ("discriminator_b", model.discriminator_b.architecture(sample_size)),
    ];
    ComputeReport {
        sample_size,
        networks: archs
            .into_iter()
            .map(|(n, a)| NetworkCompute { name: n.into(), params: a.params, flops: a.flops() })
            .collect(),
        samples_per_second,
        replicas,
    }
}

impl fmt::Display for ComputeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "compute report ({}x{} sample, {} replica(s))", self.sample_size, self.sample_size, self.replicas)?;
        writeln!(f, "{:<16} {:>14} {:>14} {:>16}", "network", "conv params", "total params", "GFLOPs/sample")?;
        let row = |f: &mut fmt::Formatter<'_>, name: &str, p: ParamCount, fl: u64| {
            writeln!(f, "{:<16} {:>14} {:>14} {:>16.3}", name, p.conv, p.total(), fl as f64 / 1e9)
        };
        for n in &self.networks {
            row(f, &n.name, n.params, n.flops)?;
        }
        let (p, fl) = self.translator_pair();
        row(f, "translator pair", p, fl)?;
        let (p, fl) = self.discriminator_pair();
        row(f, "critic pair", p, fl)?;
        match self.samples_per_second {
            Some(s) => write!(f, "throughput: {s:.3} samples/s"),
            None => write!(f, "throughput: not measured"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_totals_add_up() {
        let r = compute_report(&ModelConfig::standard(1), 256, 1, None);
        let (t, _) = r.translator_pair();
        assert_eq!(t.conv, r.networks[0].params.conv + r.networks[1].params.conv);
        assert!(r.to_string().contains("translator pair"));
    }
}
