//! Fréchet distance between two Gaussians.

use nalgebra::DMatrix;

use super::stats::GaussianStats;
use crate::error::{Error, Result};

/// Symmetric PSD square root via eigendecomposition; negative eigenvalues
/// (round-off) are clamped to zero.
pub fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let e = sym.symmetric_eigen();
    let d = e.eigenvalues.map(|l| l.max(0.0).sqrt());
    &e.eigenvectors * DMatrix::from_diagonal(&d) * e.eigenvectors.transpose()
}

/// `‖m1 − m2‖² + Tr(C1 + C2 − 2 (C1 C2)^{1/2})`.
///
/// The trace of `(C1 C2)^{1/2}` is taken from the eigenvalues of the
/// symmetric `C1^{1/2} C2 C1^{1/2}` (same spectrum as `C1 C2`), so no complex
/// arithmetic is ever needed. Small negative results are clamped to zero.
pub fn frechet_distance(a: &GaussianStats, b: &GaussianStats) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!("embedding dims differ: {} vs {}", a.dim(), b.dim())));
    }
    let s1 = sqrt_psd(&a.cov);
    let m = &s1 * &b.cov * &s1;
    let m = (&m + m.transpose()) * 0.5;
    let eig = m.symmetric_eigenvalues();
    if eig.iter().any(|l| !l.is_finite()) {
        return Err(Error::NonFinite(format!("eigenvalues of C1^1/2 C2 C1^1/2: {:?}", eig.as_slice())));
    }
    let tr_sqrt: f64 = eig.iter().map(|l| l.max(0.0).sqrt()).sum();
    let diff = &a.mean - &b.mean;
    let d = diff.dot(&diff) + a.cov.trace() + b.cov.trace() - 2.0 * tr_sqrt;
    if !d.is_finite() {
        return Err(Error::NonFinite(format!("Fréchet distance; eigenvalues {:?}", eig.as_slice())));
    }
    Ok(d.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use proptest::prelude::*;

    fn stats(mean: Vec<f64>, cov: DMatrix<f64>) -> GaussianStats {
        GaussianStats { mean: DVector::from_vec(mean), cov, n: 100 }
    }

    fn random_psd(d: usize, entries: &[f64]) -> DMatrix<f64> {
        let a = DMatrix::from_column_slice(d, d, entries);
        &a * a.transpose() + DMatrix::identity(d, d) * 0.1
    }

    /// Denman–Beavers iteration for the principal square root of `C1 C2`
    /// (positive spectrum), independent of any eigendecomposition.
    fn sqrtm_db(m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = m.clone();
        let mut z = DMatrix::identity(m.nrows(), m.ncols());
        for _ in 0..100 {
            let yi = y.clone().try_inverse().unwrap();
            let zi = z.clone().try_inverse().unwrap();
            y = (&y + zi) * 0.5;
            z = (&z + yi) * 0.5;
        }
        y
    }

    #[test]
    fn equal_stats_give_zero() {
        let s = stats(vec![1.0, 2.0, 3.0], random_psd(3, &[0.3, -1.0, 0.2, 0.5, 0.9, -0.4, 0.1, 0.0, 1.2]));
        assert!(frechet_distance(&s, &s).unwrap() < 1e-10);
    }

    #[test]
    fn identity_covariances_reduce_to_mean_distance() {
        let a = stats(vec![0.0; 3], DMatrix::identity(3, 3));
        let b = stats(vec![1.0, -2.0, 0.5], DMatrix::identity(3, 3));
        assert!((frechet_distance(&a, &b).unwrap() - 5.25).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let a = stats(vec![0.0; 2], DMatrix::identity(2, 2));
        let b = stats(vec![0.0; 3], DMatrix::identity(3, 3));
        assert!(matches!(frechet_distance(&a, &b), Err(Error::Shape(_))));
    }

    #[test]
    fn singular_covariances_are_clamped() {
        let a = stats(vec![0.0; 2], DMatrix::zeros(2, 2));
        let b = stats(vec![0.0; 2], DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]));
        assert!((frechet_distance(&a, &b).unwrap() - 2.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn matches_iterative_sqrtm_oracle(
            e1 in prop::collection::vec(-1.0f64..1.0, 16),
            e2 in prop::collection::vec(-1.0f64..1.0, 16),
            m in prop::collection::vec(-2.0f64..2.0, 8),
        ) {
            let (c1, c2) = (random_psd(4, &e1), random_psd(4, &e2));
            let a = stats(m[..4].to_vec(), c1.clone());
            let b = stats(m[4..].to_vec(), c2.clone());
            let diff = &a.mean - &b.mean;
            let oracle = diff.dot(&diff) + c1.trace() + c2.trace() - 2.0 * sqrtm_db(&(&c1 * &c2)).trace();
            let got = frechet_distance(&a, &b).unwrap();
            prop_assert!((got - oracle).abs() <= 1e-6 * oracle.abs().max(1.0), "{got} vs {oracle}");
            let sym = frechet_distance(&b, &a).unwrap();
            prop_assert!((got - sym).abs() <= 1e-9 * got.max(1.0));
        }
    }
}
