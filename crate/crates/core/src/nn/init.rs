//! Seeded weight initialization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Standard deviation of the kernel initializer.
pub const INIT_STD: f64 = 0.02;

/// Normal(mean, std) samples, redrawn until they fall within two standard deviations.
pub fn truncated_normal(n: usize, mean: f64, std: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let dist = Normal::new(0.0, 1.0).expect("unit normal");
    (0..n)
        .map(|_| loop {
            let z: f64 = dist.sample(rng);
            if z.abs() <= 2.0 {
                break mean + std * z;
            }
        })
        .collect()
}

/// Independent generator for network `stream` under a run seed.
pub fn network_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_are_truncated_and_seeded() {
        let a = truncated_normal(10_000, 0.0, 0.02, &mut network_rng(3, 0));
        assert!(a.iter().all(|v| v.abs() <= 0.04));
        let mean = a.iter().sum::<f64>() / a.len() as f64;
        assert!(mean.abs() < 1e-3);
        assert_eq!(a, truncated_normal(10_000, 0.0, 0.02, &mut network_rng(3, 0)));
        assert_ne!(a, truncated_normal(10_000, 0.0, 0.02, &mut network_rng(3, 1)));
    }
}
