//! Sample mean and covariance of embedding vectors.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Mean `m`, covariance `C` (denominator `n − 1`) and sample count `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub n: usize,
}

impl GaussianStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// True when `n ≤ d`: the covariance cannot have full rank.
    pub fn rank_deficient(&self) -> bool {
        self.n <= self.dim()
    }
}

/// Two-pass mean/covariance; the result is exactly symmetric.
pub fn gaussian_stats(vectors: &[Vec<f64>]) -> Result<GaussianStats> {
    let n = vectors.len();
    if n < 2 {
        return Err(Error::Validation(format!("need at least 2 samples for a covariance, got {n}")));
    }
    let d = vectors[0].len();
    if d == 0 || vectors.iter().any(|v| v.len() != d) {
        return Err(Error::Shape("embedding vectors must share one nonzero dimension".into()));
    }
    if vectors.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("embedding contains NaN or infinity".into()));
    }
    let mut mean = DVector::zeros(d);
    for v in vectors {
        mean += DVector::from_column_slice(v);
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(d, d);
    for v in vectors {
        let c = DVector::from_column_slice(v) - &mean;
        for j in 0..d {
            for i in 0..=j {
                cov[(i, j)] += c[i] * c[j];
            }
        }
    }
    for j in 0..d {
        for i in 0..=j {
            let x = cov[(i, j)] / (n - 1) as f64;
            cov[(i, j)] = x;
            cov[(j, i)] = x;
        }
    }
    if n <= d {
        log::warn!("covariance from {n} samples in {d} dimensions is rank deficient");
    }
    Ok(GaussianStats { mean, cov, n })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_vectors_have_zero_covariance() {
        let s = gaussian_stats(&[vec![1.0, -2.0, 3.0], vec![1.0, -2.0, 3.0]]).unwrap();
        assert_eq!(s.cov, DMatrix::zeros(3, 3));
        assert!(s.rank_deficient());
    }

    #[test]
    fn standard_basis_pair() {
        let s = gaussian_stats(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(s.mean.as_slice(), &[0.5, 0.5]);
        assert_eq!(s.cov, DMatrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5]));
    }

    #[test]
    fn rank_warning_boundary() {
        let v: Vec<Vec<f64>> = (0..3).map(|i| vec![i as f64, (i * i) as f64, 1.0 - i as f64]).collect();
        assert!(gaussian_stats(&v).unwrap().rank_deficient());
        let v: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64, (i * i) as f64, 1.0]).collect();
        assert!(!gaussian_stats(&v).unwrap().rank_deficient());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(gaussian_stats(&[vec![1.0]]).is_err());
        assert!(gaussian_stats(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(gaussian_stats(&[vec![f64::NAN], vec![1.0]]).is_err());
    }
}
