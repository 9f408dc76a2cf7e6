//! Deterministic synthetic corpora for smoke tests, benches and demos.
//!
//! The optical channels are affine functions of a smooth random field and
//! the SAR patch is the field itself, so each direction is learnable from the
//! other. Raw scenes mimic sensor units: SAR amplitudes with zero padding and
//! 8-bit optical intensities.

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::loader::PatchPair;
use crate::dataset::manifest::Split;
use crate::error::Result;
use crate::raster::RasterImage;

const OPT_GAIN: [f32; 3] = [0.8, -0.6, 0.5];
const OPT_OFFSET: [f32; 3] = [0.1, 0.2, -0.3];

/// Sum of random plane waves, scaled into `[-0.9, 0.9]`.
pub fn smooth_field(h: usize, w: usize, rng: &mut impl Rng) -> Array2<f32> {
    let waves: Vec<(f32, f32, f32, f32)> = (0..4)
        .map(|_| {
            (
                rng.random_range(0.05..0.6),
                rng.random_range(0.05..0.6),
                rng.random_range(0.0..std::f32::consts::TAU),
                rng.random_range(0.3..1.0),
            )
        })
        .collect();
    let norm: f32 = waves.iter().map(|w| w.3).sum();
    Array2::from_shape_fn((h, w), |(y, x)| {
        let v: f32 = waves
            .iter()
            .map(|&(fy, fx, ph, amp)| amp * (fy * y as f32 + fx * x as f32 + ph).cos())
            .sum();
        0.9 * v / norm
    })
}

/// Maps a field in `[-1, 1]` to the three optical channels.
pub fn optical_from_field(field: &Array2<f32>) -> Array3<f32> {
    let (h, w) = field.dim();
    Array3::from_shape_fn((h, w, 3), |(y, x, c)| OPT_GAIN[c] * field[[y, x]] + OPT_OFFSET[c])
}

/// `n` normalized pairs of `size × size` patches; SAR has `sar_channels` copies of the field.
pub fn synthetic_pairs(n: usize, size: usize, sar_channels: usize, seed: u64) -> Result<Vec<PatchPair>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let field = smooth_field(size, size, &mut rng);
            let sar = Array3::from_shape_fn((size, size, sar_channels), |(y, x, _)| field[[y, x]]);
            let id = format!("synthetic_{i:04}");
            PatchPair::new(
                RasterImage::new(sar, id.clone())?,
                RasterImage::new(optical_from_field(&field), id.clone())?,
                id,
                Split::Train,
            )
        })
        .collect()
}

/// A raw co-registered scene: SAR amplitudes (with a zero-padded border of
/// `pad` pixels) and 8-bit-scale optical intensities.
pub fn synthetic_scene(h: usize, w: usize, pad: usize, seed: u64) -> Result<(RasterImage, RasterImage)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let field = smooth_field(h, w, &mut rng);
    let sar = Array2::from_shape_fn((h, w), |(y, x)| {
        if y < pad || x < pad || y + pad >= h || x + pad >= w {
            0.0
        } else {
            // amplitudes spread over a few decades, like detected SAR
            let speckle: f32 = rng.random_range(0.5..1.5);
            (3.0 * field[[y, x]]).exp() * 40.0 * speckle
        }
    });
    let opt = optical_from_field(&field).mapv(|v| ((v + 1.0) * 127.5).round().clamp(0.0, 255.0));
    Ok((
        RasterImage::from_plane(sar, format!("synthetic-sar-{seed}"))?,
        RasterImage::new(opt, format!("synthetic-opt-{seed}"))?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs_are_in_range_and_deterministic() {
        let a = synthetic_pairs(3, 16, 1, 4).unwrap();
        let b = synthetic_pairs(3, 16, 1, 4).unwrap();
        assert_eq!(a, b);
        for p in &a {
            assert_eq!(p.optical.channels(), 3);
            assert!(p.sar.pixels().iter().all(|v| v.abs() <= 0.9 + 1e-6));
        }
    }

    #[test]
    fn scene_has_zero_padding() {
        let (sar, opt) = synthetic_scene(40, 50, 3, 1).unwrap();
        assert_eq!(sar.pixels()[[0, 0, 0]], 0.0);
        assert!(sar.pixels()[[20, 20, 0]] > 0.0);
        assert_eq!((opt.height(), opt.width(), opt.channels()), (40, 50, 3));
    }
}
