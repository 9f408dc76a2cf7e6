//! Linear mapping of raw SAR amplitudes and optical intensities into `[-1, 1]`.

use ndarray::{Array3, Axis};

use crate::error::{Error, Result};
use crate::raster::RasterImage;

/// Default scale of the clipping threshold relative to the non-zero mean.
pub const DEFAULT_LAMBDA: f64 = 2000.0;

/// Statistics recorded while normalizing one SAR channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationParams {
    pub lambda: f64,
    /// Clipping threshold: `lambda * sum(x) / (N - n)`.
    pub x_bar: f64,
    /// Total pixel count.
    pub total: usize,
    /// Pixels exactly equal to zero (padding).
    pub zeros: usize,
}

impl NormalizationParams {
    /// Derives the threshold from raw pixel values.
    pub fn from_values<'a>(values: impl IntoIterator<Item = &'a f32>, lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::Validation(format!(
                "lambda must be a positive finite scale, got {lambda}"
            )));
        }
        let mut sum = 0.0f64;
        let mut total = 0usize;
        let mut zeros = 0usize;
        for &v in values {
            total += 1;
            // padding in SAR products is exact zero
            if v == 0.0 {
                zeros += 1;
            }
            sum += f64::from(v);
        }
        if total == zeros {
            return Err(Error::DegenerateInput(format!(
                "all {total} pixels are zero; threshold undefined"
            )));
        }
        let x_bar = lambda * sum / (total - zeros) as f64;
        if !(x_bar.is_finite() && x_bar > 0.0) {
            return Err(Error::DegenerateInput(format!(
                "threshold {x_bar} is not positive (pixel sum {sum})"
            )));
        }
        Ok(Self {
            lambda,
            x_bar,
            total,
            zeros,
        })
    }

    /// Piecewise-linear map of one pixel.
    pub fn apply(&self, x: f32) -> f32 {
        let x = f64::from(x);
        if x <= 0.0 {
            -1.0
        } else if x >= self.x_bar {
            1.0
        } else {
            (2.0 * x / self.x_bar - 1.0) as f32
        }
    }
}

/// Normalizes a single-channel amplitude raster into `[-1, 1]`.
pub fn normalize_sar(raster: &RasterImage, lambda: f64) -> Result<(RasterImage, NormalizationParams)> {
    if raster.channels() != 1 {
        return Err(Error::Validation(format!(
            "normalize_sar expects a single-channel amplitude raster, got {} channels",
            raster.channels()
        )));
    }
    let params = NormalizationParams::from_values(raster.pixels().iter(), lambda)?;
    let out = raster.pixels().mapv(|x| params.apply(x));
    Ok((RasterImage::new(out, raster.source_tag.clone())?, params))
}

/// Applies [`normalize_sar`] independently to every channel.
pub fn normalize_channels(
    raster: &RasterImage,
    lambda: f64,
) -> Result<(RasterImage, Vec<NormalizationParams>)> {
    let mut out = Array3::<f32>::zeros(raster.pixels().raw_dim());
    let mut params = Vec::with_capacity(raster.channels());
    for c in 0..raster.channels() {
        let plane = raster.channel(c);
        let p = NormalizationParams::from_values(plane.iter(), lambda)?;
        out.index_axis_mut(Axis(2), c)
            .zip_mut_with(&plane, |o, &x| *o = p.apply(x));
        params.push(p);
    }
    Ok((RasterImage::new(out, raster.source_tag.clone())?, params))
}

/// Maps 8-bit-scale optical intensities `[0, 255]` onto `[-1, 1]` (`x / 127.5 - 1`).
pub fn normalize_optical(raster: &RasterImage) -> Result<RasterImage> {
    let out = raster
        .pixels()
        .mapv(|x| (f64::from(x) / 127.5 - 1.0).clamp(-1.0, 1.0) as f32);
    RasterImage::new(out, raster.source_tag.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;

    fn plane(v: &[f32]) -> RasterImage {
        RasterImage::from_plane(Array2::from_shape_vec((1, v.len()), v.to_vec()).unwrap(), "t").unwrap()
    }

    // Straight transcription of the piecewise map, kept apart from the implementation.
    fn oracle(values: &[f32], lambda: f64) -> Vec<f64> {
        let n_zero = values.iter().filter(|&&v| v == 0.0).count();
        let sum: f64 = values.iter().map(|&v| v as f64).sum();
        let x_bar = lambda * sum / (values.len() - n_zero) as f64;
        values
            .iter()
            .map(|&v| {
                let v = v as f64;
                if v <= 0.0 {
                    -1.0
                } else if v >= x_bar {
                    1.0
                } else {
                    2.0 * v / x_bar - 1.0
                }
            })
            .collect()
    }

    #[test]
    fn three_pixel_example() {
        let (out, p) = normalize_sar(&plane(&[0.0, 1.0, 3.0]), 2000.0).unwrap();
        assert_eq!(p.x_bar, 4000.0);
        assert_eq!((p.total, p.zeros), (3, 1));
        let px = out.pixels();
        assert_eq!(px[[0, 0, 0]], -1.0);
        assert!((px[[0, 1, 0]] as f64 - (-0.9995)).abs() < 1e-7);
    }

    #[test]
    fn default_lambda() {
        assert_eq!(DEFAULT_LAMBDA, 2000.0);
    }

    #[test]
    fn saturates_above_threshold() {
        // lambda 1 puts the threshold at the non-zero mean
        let (out, p) = normalize_sar(&plane(&[1.0, 3.0]), 1.0).unwrap();
        assert_eq!(p.x_bar, 2.0);
        assert_eq!(out.pixels()[[0, 1, 0]], 1.0);
        assert_eq!(out.pixels()[[0, 0, 0]], 0.0);
    }

    #[test]
    fn all_zero_is_degenerate() {
        assert!(matches!(
            normalize_sar(&plane(&[0.0, 0.0]), 2000.0),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn bad_lambda_rejected() {
        assert!(matches!(
            normalize_sar(&plane(&[1.0]), -1.0),
            Err(Error::Validation(_))
        ));
        assert!(matches!(normalize_sar(&plane(&[1.0]), f64::NAN), Err(Error::Validation(_))));
    }

    #[test]
    fn optical_affine_map() {
        let out = normalize_optical(&plane(&[0.0, 127.5, 255.0])).unwrap();
        assert_eq!(out.pixels().iter().copied().collect::<Vec<_>>(), vec![-1.0, 0.0, 1.0]);
    }

    proptest! {
        #[test]
        fn output_in_range_and_monotone(
            mut values in proptest::collection::vec(prop_oneof![Just(0.0f32), 0.0f32..5000.0], 2..64),
            lambda in 0.5f64..3000.0,
        ) {
            values.push(1.0);
            let (out, _) = normalize_sar(&plane(&values), lambda).unwrap();
            let out: Vec<f32> = out.pixels().iter().copied().collect();
            let expect = oracle(&values, lambda);
            for ((&x, &y), &e) in values.iter().zip(&out).zip(&expect) {
                prop_assert!((-1.0..=1.0).contains(&y));
                if x <= 0.0 { prop_assert_eq!(y, -1.0); }
                prop_assert!((y as f64 - e).abs() <= 1e-6);
            }
            let mut pairs: Vec<(f32, f32)> = values.iter().copied().zip(out.iter().copied()).collect();
            pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            for w in pairs.windows(2) {
                prop_assert!(w[1].1 >= w[0].1);
            }
        }
    }
}
