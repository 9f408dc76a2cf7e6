//! Shared fixtures for the criterion benches.

use candle_core::{DType, Device, Tensor};
use num_complex::Complex32;

use sar2opt_core::dataset::synthetic::synthetic_pairs;
use sar2opt_core::dataset::{PatchPair, ScatteringMatrix};
use sar2opt_core::Result;

/// Deterministic pairs of `size × size` patches (one SAR channel).
pub fn pairs(n: usize, size: usize) -> Result<Vec<PatchPair>> {
    synthetic_pairs(n, size, 1, 42)
}

/// `(1, c, size, size)` tensor with values in `[-1, 1]`.
pub fn input(c: usize, size: usize, dtype: DType) -> Result<Tensor> {
    let t = Tensor::rand(-1f32, 1f32, (1, c, size, size), &Device::Cpu)?;
    Ok(t.to_dtype(dtype)?)
}

/// A smoothly varying quad-pol scene.
pub fn scattering(h: usize, w: usize) -> Result<ScatteringMatrix> {
    let ch = |k: f32| {
        ndarray::Array2::from_shape_fn((h, w), |(y, x)| {
            let (y, x) = (y as f32, x as f32);
            Complex32::new((0.05 * x + k).sin() + 1.5, (0.07 * y - k).cos())
        })
    };
    ScatteringMatrix::new(ch(0.0), ch(1.0), ch(2.0), ch(3.0))
}
