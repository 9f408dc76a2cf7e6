//! Pauli decomposition of the polarimetric scattering matrix and its
//! pseudo-color intensity coding.

use std::f64::consts::FRAC_1_SQRT_2;

use ndarray::{Array2, Array3, Zip};
use num_complex::{Complex32, Complex64};

use crate::dataset::normalize::{normalize_channels, NormalizationParams};
use crate::error::{Error, Result};
use crate::raster::RasterImage;

/// Per-pixel complex 2×2 Sinclair matrix, one array per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringMatrix {
    pub hh: Array2<Complex32>,
    pub hv: Array2<Complex32>,
    pub vh: Array2<Complex32>,
    pub vv: Array2<Complex32>,
}

/// Surface (`a`), dihedral (`b`), volume (`c`) and antisymmetric (`d`) components.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliComponents {
    pub a: Array2<Complex32>,
    pub b: Array2<Complex32>,
    pub c: Array2<Complex32>,
    pub d: Array2<Complex32>,
}

impl ScatteringMatrix {
    pub fn new(
        hh: Array2<Complex32>,
        hv: Array2<Complex32>,
        vh: Array2<Complex32>,
        vv: Array2<Complex32>,
    ) -> Result<Self> {
        let s = Self { hh, hv, vh, vv };
        s.validate()?;
        Ok(s)
    }

    pub fn dim(&self) -> (usize, usize) {
        self.hh.dim()
    }

    fn validate(&self) -> Result<()> {
        let d = self.hh.dim();
        for (name, ch) in [("HV", &self.hv), ("VH", &self.vh), ("VV", &self.vv)] {
            if ch.dim() != d {
                return Err(Error::Validation(format!(
                    "scattering channel {name} is {:?}, HH is {d:?}",
                    ch.dim()
                )));
            }
        }
        for (name, ch) in [("HH", &self.hh), ("HV", &self.hv), ("VH", &self.vh), ("VV", &self.vv)] {
            if ch.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
                return Err(Error::NonFinite(format!("scattering channel {name}")));
            }
        }
        Ok(())
    }
}

fn widen(z: Complex32) -> Complex64 {
    Complex64::new(f64::from(z.re), f64::from(z.im))
}

fn narrow(z: Complex64) -> Complex32 {
    Complex32::new(z.re as f32, z.im as f32)
}

/// Decomposes every pixel into its four Pauli components.
pub fn pauli_components(s: &ScatteringMatrix) -> Result<PauliComponents> {
    s.validate()?;
    let dim = s.dim();
    let mut a = Array2::zeros(dim);
    let mut b = Array2::zeros(dim);
    let mut c = Array2::zeros(dim);
    let mut d = Array2::zeros(dim);
    let j = Complex64::new(0.0, 1.0);
    Zip::from(&mut a)
        .and(&mut b)
        .and(&s.hh)
        .and(&s.vv)
        .for_each(|a, b, &hh, &vv| {
            let (hh, vv) = (widen(hh), widen(vv));
            *a = narrow((hh + vv) * FRAC_1_SQRT_2);
            *b = narrow((hh - vv) * FRAC_1_SQRT_2);
        });
    Zip::from(&mut c)
        .and(&mut d)
        .and(&s.hv)
        .and(&s.vh)
        .for_each(|c, d, &hv, &vh| {
            let (hv, vh) = (widen(hv), widen(vh));
            *c = narrow((hv + vh) * FRAC_1_SQRT_2);
            *d = narrow(j * (hv - vh) * FRAC_1_SQRT_2);
        });
    Ok(PauliComponents { a, b, c, d })
}

/// Raw pseudo-color intensities `[|HH−VV|², 4|HV|², |HH+VV|²] / 2` as (R, G, B).
pub fn pauli_intensities(s: &ScatteringMatrix) -> Result<RasterImage> {
    s.validate()?;
    let (h, w) = s.dim();
    let mut out = Array3::<f32>::zeros((h, w, 3));
    for y in 0..h {
        for x in 0..w {
            let hh = widen(s.hh[[y, x]]);
            let hv = widen(s.hv[[y, x]]);
            let vv = widen(s.vv[[y, x]]);
            out[[y, x, 0]] = ((hh - vv).norm_sqr() / 2.0) as f32;
            out[[y, x, 1]] = (4.0 * hv.norm_sqr() / 2.0) as f32;
            out[[y, x, 2]] = ((hh + vv).norm_sqr() / 2.0) as f32;
        }
    }
    RasterImage::new(out, "pauli")
}

/// Pauli RGB normalized channel-by-channel into `[-1, 1]` with the SAR threshold rule.
pub fn pauli_rgb(
    s: &ScatteringMatrix,
    lambda: f64,
) -> Result<(RasterImage, Vec<NormalizationParams>)> {
    normalize_channels(&pauli_intensities(s)?, lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn constant(hh: (f32, f32), hv: (f32, f32), vh: (f32, f32), vv: (f32, f32)) -> ScatteringMatrix {
        let f = |(re, im): (f32, f32)| Array2::from_elem((2, 3), Complex32::new(re, im));
        ScatteringMatrix::new(f(hh), f(hv), f(vh), f(vv)).unwrap()
    }

    fn random(rng: &mut ChaCha8Rng, h: usize, w: usize) -> ScatteringMatrix {
        let mut ch = || Array2::from_shape_fn((h, w), |_| Complex32::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)));
        ScatteringMatrix::new(ch(), ch(), ch(), ch()).unwrap()
    }

    fn intensities_at(img: &RasterImage, y: usize, x: usize) -> [f32; 3] {
        let p = img.pixels();
        [p[[y, x, 0]], p[[y, x, 1]], p[[y, x, 2]]]
    }

    #[test]
    fn surface_case() {
        let img = pauli_intensities(&constant((1.0, 0.0), (0.0, 0.0), (0.0, 0.0), (1.0, 0.0))).unwrap();
        assert_eq!(intensities_at(&img, 1, 2), [0.0, 0.0, 2.0]);
    }

    #[test]
    fn dihedral_case() {
        let img = pauli_intensities(&constant((1.0, 0.0), (0.0, 0.0), (0.0, 0.0), (-1.0, 0.0))).unwrap();
        assert_eq!(intensities_at(&img, 0, 0), [2.0, 0.0, 0.0]);
    }

    #[test]
    fn reciprocal_case_has_no_antisymmetric_part() {
        let p = pauli_components(&constant((0.3, 0.1), (0.5, -0.2), (0.5, -0.2), (0.7, 0.0))).unwrap();
        assert!(p.d.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn direct_substitution() {
        let p = pauli_components(&constant((2f32.sqrt(), 0.0), (0.0, 0.0), (0.0, 0.0), (0.0, 0.0))).unwrap();
        let z = p.a[[0, 0]];
        assert!((z.re - 1.0).abs() < 1e-6 && z.im == 0.0);
        assert!((p.b[[0, 0]].re - 1.0).abs() < 1e-6);
        assert_eq!(p.c[[0, 0]].norm(), 0.0);
        assert_eq!(p.d[[0, 0]].norm(), 0.0);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let z = |h, w| Array2::<Complex32>::zeros((h, w));
        assert!(matches!(
            ScatteringMatrix::new(z(2, 2), z(2, 2), z(2, 3), z(2, 2)),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn matches_scalar_oracle_and_conserves_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let s = random(&mut rng, 3, 4);
            let img = pauli_intensities(&s).unwrap();
            let comps = pauli_components(&s).unwrap();
            for y in 0..3 {
                for x in 0..4 {
                    // scalar oracle in f64 straight from the channel values
                    let c = |z: Complex32| (z.re as f64, z.im as f64);
                    let (hr, hi) = c(s.hh[[y, x]]);
                    let (xr, xi) = c(s.hv[[y, x]]);
                    let (yr, yi) = c(s.vh[[y, x]]);
                    let (vr, vi) = c(s.vv[[y, x]]);
                    let expect = [
                        ((hr - vr).powi(2) + (hi - vi).powi(2)) / 2.0,
                        4.0 * (xr * xr + xi * xi) / 2.0,
                        ((hr + vr).powi(2) + (hi + vi).powi(2)) / 2.0,
                    ];
                    let got = intensities_at(&img, y, x);
                    for k in 0..3 {
                        let rel = (got[k] as f64 - expect[k]).abs() / expect[k].abs().max(1e-12);
                        assert!(rel < 1e-6, "channel {k}: {} vs {}", got[k], expect[k]);
                    }
                    let total_in = hr * hr + hi * hi + xr * xr + xi * xi + yr * yr + yi * yi + vr * vr + vi * vi;
                    let n = |z: Complex32| (z.re as f64).powi(2) + (z.im as f64).powi(2);
                    let total_out = n(comps.a[[y, x]]) + n(comps.b[[y, x]]) + n(comps.c[[y, x]]) + n(comps.d[[y, x]]);
                    assert!((total_out - total_in).abs() / total_in < 1e-6);
                }
            }
        }
    }

    #[test]
    fn rgb_is_normalized_per_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = random(&mut rng, 8, 8);
        let (img, params) = pauli_rgb(&s, 1.0).unwrap();
        assert_eq!(params.len(), 3);
        assert!(img.pixels().iter().all(|v| (-1.0..=1.0).contains(v)));
        let raw = pauli_intensities(&s).unwrap();
        let v = raw.pixels()[[3, 4, 1]];
        assert_eq!(img.pixels()[[3, 4, 1]], params[1].apply(v));
    }
}
