//! Full-reference quality metrics on `[-1, 1]` images, evaluated on the
//! `[0, 1]` rescaling.

use ndarray::{s, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::raster::RasterImage;

/// Reported in place of `+∞` dB for identical images.
pub const PSNR_CAP: f64 = 99.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn check_same(a: &RasterImage, b: &RasterImage) -> Result<()> {
    let da = (a.height(), a.width(), a.channels());
    let db = (b.height(), b.width(), b.channels());
    if da != db {
        return Err(Error::Shape(format!("reference {da:?} and candidate {db:?} differ in shape")));
    }
    Ok(())
}

fn unit(v: f32) -> f64 {
    (v as f64 + 1.0) * 0.5
}

/// `10·log10(1 / MSE)` on `[0, 1]`; `+∞` for identical images.
pub fn psnr(reference: &RasterImage, candidate: &RasterImage) -> Result<f64> {
    check_same(reference, candidate)?;
    let n = reference.pixels().len() as f64;
    let mse = reference
        .pixels()
        .iter()
        .zip(candidate.pixels())
        .map(|(&a, &b)| (unit(a) - unit(b)).powi(2))
        .sum::<f64>()
        / n;
    Ok(if mse == 0.0 { f64::INFINITY } else { -10.0 * mse.log10() })
}

/// Normalized 1-D Gaussian taps.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let g: Vec<f64> = (0..size).map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Separable "valid" filtering.
fn filter_valid(x: &Array2<f64>, taps: &[f64]) -> Array2<f64> {
    let k = taps.len();
    let (h, w) = x.dim();
    let rows: Array2<f64> = Array2::from_shape_fn((h, w - k + 1), |(y, j)| (0..k).map(|t| taps[t] * x[[y, j + t]]).sum());
    Array2::from_shape_fn((h - k + 1, w - k + 1), |(i, j)| (0..k).map(|t| taps[t] * rows[[i + t, j]]).sum())
}

fn ssim_plane(a: ArrayView2<'_, f32>, b: ArrayView2<'_, f32>, taps: &[f64]) -> f64 {
    let x = a.mapv(unit);
    let y = b.mapv(unit);
    let (c1, c2) = (SSIM_K1.powi(2), SSIM_K2.powi(2));
    let mx = filter_valid(&x, taps);
    let my = filter_valid(&y, taps);
    let sxx = filter_valid(&(&x * &x), taps) - &mx * &mx;
    let syy = filter_valid(&(&y * &y), taps) - &my * &my;
    let sxy = filter_valid(&(&x * &y), taps) - &mx * &my;
    let num = (&mx * &my * 2.0 + c1) * (sxy * 2.0 + c2);
    let den = (&mx * &mx + &my * &my + c1) * (sxx + syy + c2);
    (num / den).mean().unwrap_or(f64::NAN)
}

/// Mean local SSIM (11×11 Gaussian window, σ = 1.5, dynamic range 1) over the
/// valid region, averaged across channels.
pub fn ssim(reference: &RasterImage, candidate: &RasterImage) -> Result<f64> {
    check_same(reference, candidate)?;
    if reference.height() < SSIM_WINDOW || reference.width() < SSIM_WINDOW {
        return Err(Error::Validation(format!(
            "SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {}x{}",
            reference.height(),
            reference.width()
        )));
    }
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let c = reference.channels();
    let total: f64 = (0..c)
        .map(|k| {
            ssim_plane(
                reference.pixels().slice(s![.., .., k]),
                candidate.pixels().slice(s![.., .., k]),
                &taps,
            )
        })
        .sum();
    Ok(total / c as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use proptest::prelude::*;

    fn img(h: usize, w: usize, c: usize, v: &[f32]) -> RasterImage {
        RasterImage::new(Array3::from_shape_vec((h, w, c), v.to_vec()).unwrap(), "t").unwrap()
    }

    /// Direct windowed SSIM: every local statistic summed over the 2-D window.
    fn ssim_oracle(a: &RasterImage, b: &RasterImage) -> f64 {
        let (h, w, ch) = (a.height(), a.width(), a.channels());
        let k = SSIM_WINDOW;
        let c = (k as f64 - 1.0) / 2.0;
        let mut win = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                win[i * k + j] = (-((i as f64 - c).powi(2) + (j as f64 - c).powi(2)) / (2.0 * 1.5 * 1.5)).exp();
            }
        }
        let z: f64 = win.iter().sum();
        win.iter_mut().for_each(|v| *v /= z);
        let mut total = 0.0;
        for cc in 0..ch {
            let mut acc = 0.0;
            let mut cnt = 0;
            for y0 in 0..=h - k {
                for x0 in 0..=w - k {
                    let (mut mx, mut my, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                    for i in 0..k {
                        for j in 0..k {
                            let wv = win[i * k + j];
                            let p = (a.pixels()[[y0 + i, x0 + j, cc]] as f64 + 1.0) / 2.0;
                            let q = (b.pixels()[[y0 + i, x0 + j, cc]] as f64 + 1.0) / 2.0;
                            mx += wv * p;
                            my += wv * q;
                            xx += wv * p * p;
                            yy += wv * q * q;
                            xy += wv * p * q;
                        }
                    }
                    let (c1, c2) = (1e-4, 9e-4);
                    acc += ((2.0 * mx * my + c1) * (2.0 * (xy - mx * my) + c2))
                        / ((mx * mx + my * my + c1) * ((xx - mx * mx) + (yy - my * my) + c2));
                    cnt += 1;
                }
            }
            total += acc / cnt as f64;
        }
        total / ch as f64
    }

    #[test]
    fn psnr_cases() {
        let a = img(2, 2, 1, &[0.0, 0.5, -1.0, 1.0]);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        // a uniform 0.5 difference on the [0,1] scale is 1.0 on [-1,1]
        let b = img(2, 2, 1, &[-1.0, -0.5, -1.0, 0.0]);
        let c = img(2, 2, 1, &[0.0, 0.5, 0.0, 1.0]);
        assert!((psnr(&b, &c).unwrap() - 10.0 * 4f64.log10()).abs() < 1e-12);
        assert!(matches!(psnr(&a, &img(1, 4, 1, &[0.0; 4])), Err(Error::Shape(_))));
    }

    #[test]
    fn ssim_cases() {
        let v: Vec<f32> = (0..16 * 16).map(|i| ((i * 37 % 101) as f32 / 50.0 - 1.0) * 0.8).collect();
        let a = img(16, 16, 1, &v);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f32> = v.iter().map(|x| -x).collect();
        assert!(ssim(&a, &img(16, 16, 1, &neg)).unwrap() < 0.0);
        assert!(matches!(ssim(&img(10, 10, 1, &[0.0; 100]), &img(10, 10, 1, &[0.0; 100])), Err(Error::Validation(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn ssim_matches_windowed_oracle(
            a in prop::collection::vec(-1.0f32..1.0, 14 * 13 * 2),
            b in prop::collection::vec(-1.0f32..1.0, 14 * 13 * 2),
        ) {
            let (x, y) = (img(14, 13, 2, &a), img(14, 13, 2, &b));
            prop_assert!((ssim(&x, &y).unwrap() - ssim_oracle(&x, &y)).abs() < 1e-6);
        }

        #[test]
        fn psnr_matches_scalar_oracle(
            a in prop::collection::vec(-1.0f32..1.0, 24),
            b in prop::collection::vec(-1.0f32..1.0, 24),
        ) {
            let mut se = 0.0f64;
            for (p, q) in a.iter().zip(&b) {
                let d = (*p as f64 - *q as f64) / 2.0;
                se += d * d;
            }
            let oracle = 10.0 * (1.0 / (se / 24.0)).log10();
            prop_assert!((psnr(&img(2, 4, 3, &a), &img(2, 4, 3, &b)).unwrap() - oracle).abs() < 1e-9);
        }
    }
}
