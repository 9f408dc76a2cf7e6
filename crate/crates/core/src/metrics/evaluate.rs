//! FID over embedded sets and paired-set evaluation.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::embedder::Embedder;
use super::frechet::frechet_distance;
use super::quality::{psnr, ssim, PSNR_CAP};
use super::report::MetricReport;
use super::stats::gaussian_stats;
use crate::dataset::PairSource;
use crate::error::{Error, Result};
use crate::model::{Direction, Networks};
use crate::raster::RasterImage;

/// FID sub-sampling protocol: `repeats` estimates over `samples` randomly
/// chosen pairs each (all pairs when `None` or larger than the set), averaged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalConfig {
    pub samples: Option<usize>,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { samples: None, repeats: 1, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FidResult {
    pub value: f64,
    pub n_real: usize,
    pub n_fake: usize,
    pub rank_deficient: bool,
}

pub fn embed_all(images: &[RasterImage], embedder: &dyn Embedder) -> Result<Vec<Vec<f64>>> {
    images.par_iter().map(|im| embedder.embed(im)).collect()
}

fn fid_of_vectors(real: &[Vec<f64>], fake: &[Vec<f64>]) -> Result<FidResult> {
    let a = gaussian_stats(real)?;
    let b = gaussian_stats(fake)?;
    Ok(FidResult {
        value: frechet_distance(&a, &b)?,
        n_real: a.n,
        n_fake: b.n,
        rank_deficient: a.rank_deficient() || b.rank_deficient(),
    })
}

/// Fréchet distance between the embedded real and generated sets.
pub fn fid(real: &[RasterImage], fake: &[RasterImage], embedder: &dyn Embedder) -> Result<FidResult> {
    if real.is_empty() || fake.is_empty() {
        return Err(Error::Validation("FID needs nonempty real and generated sets".into()));
    }
    fid_of_vectors(&embed_all(real, embedder)?, &embed_all(fake, embedder)?)
}

/// Scores `fakes[i]` against `reals[i]`: repeated FID plus mean PSNR/SSIM.
pub fn compare_sets(
    reals: &[RasterImage],
    fakes: &[RasterImage],
    embedder: &dyn Embedder,
    direction: Direction,
    dataset: &str,
    cfg: &EvalConfig,
) -> Result<MetricReport> {
    if reals.len() != fakes.len() {
        return Err(Error::Validation(format!("{} references but {} candidates", reals.len(), fakes.len())));
    }
    if reals.len() < 2 {
        return Err(Error::Validation("evaluation needs at least 2 pairs".into()));
    }
    if cfg.repeats == 0 {
        return Err(Error::Validation("repeats must be at least 1".into()));
    }
    let n = reals.len();
    let er = embed_all(reals, embedder)?;
    let ef = embed_all(fakes, embedder)?;
    let k = cfg.samples.map_or(n, |s| s.clamp(2, n));
    let mut notes = Vec::new();
    if cfg.samples.is_some_and(|s| s > n) {
        notes.push(format!("requested {} FID samples but only {n} pairs exist; using all", cfg.samples.unwrap_or(0)));
    }
    let mut fid_repeats = Vec::with_capacity(cfg.repeats);
    let mut rank_deficient = false;
    for r in 0..cfg.repeats {
        let idx: Vec<usize> = if k == n {
            (0..n).collect()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(r as u64);
            sample(&mut rng, n, k).into_vec()
        };
        let pick = |e: &[Vec<f64>]| idx.iter().map(|&i| e[i].clone()).collect::<Vec<_>>();
        let f = fid_of_vectors(&pick(&er), &pick(&ef))?;
        rank_deficient |= f.rank_deficient;
        fid_repeats.push(f.value);
    }
    if rank_deficient {
        notes.push(format!("{k} samples <= embedding dim {}: covariance not full rank", embedder.dim()));
    }
    let scores: Vec<(f64, f64)> = reals
        .par_iter()
        .zip(fakes)
        .map(|(r, f)| Ok((psnr(r, f)?.min(PSNR_CAP), ssim(r, f)?)))
        .collect::<Result<_>>()?;
    Ok(MetricReport {
        direction,
        dataset: dataset.into(),
        embedder: embedder.id(),
        n_samples: n,
        fid: fid_repeats.iter().sum::<f64>() / fid_repeats.len() as f64,
        fid_repeats,
        fid_samples: k,
        psnr_mean: scores.iter().map(|s| s.0).sum::<f64>() / n as f64,
        ssim_mean: scores.iter().map(|s| s.1).sum::<f64>() / n as f64,
        rank_deficient,
        notes,
    })
}

/// Translates every pair of `source` in both directions with `nets` (inference
/// mode) and scores each direction. Pairs that fail to load or translate are
/// skipped and listed in the report notes.
pub fn evaluate(
    nets: &Networks,
    source: &dyn PairSource,
    embedder: &dyn Embedder,
    dataset: &str,
    cfg: &EvalConfig,
) -> Result<[MetricReport; 2]> {
    if source.is_empty() {
        return Err(Error::Validation("evaluation split is empty".into()));
    }
    let results: Vec<Result<(RasterImage, RasterImage, RasterImage, RasterImage)>> = (0..source.len())
        .into_par_iter()
        .map(|i| {
            let p = source.get(i)?;
            let fake_opt = nets.t_a.translate(&p.sar)?;
            let fake_sar = nets.t_b.translate(&p.optical)?;
            Ok((p.optical, fake_opt, p.sar, fake_sar))
        })
        .collect();
    let mut notes = Vec::new();
    let (mut ro, mut fo, mut rs, mut fs) = (vec![], vec![], vec![], vec![]);
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok((a, b, c, d)) => {
                ro.push(a);
                fo.push(b);
                rs.push(c);
                fs.push(d);
            }
            Err(e) => notes.push(format!("skipped {}: {e}", source.patch_id(i))),
        }
    }
    if !notes.is_empty() {
        log::warn!("{} of {} pairs skipped during evaluation", notes.len(), source.len());
    }
    let mut a = compare_sets(&ro, &fo, embedder, Direction::SarToOpt, dataset, cfg)?;
    let mut b = compare_sets(&rs, &fs, embedder, Direction::OptToSar, dataset, cfg)?;
    a.notes.extend(notes.iter().cloned());
    b.notes.extend(notes);
    Ok([a, b])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synthetic::synthetic_pairs;
    use crate::dataset::InMemorySource;
    use crate::metrics::ProjectionEmbedder;
    use crate::model::ModelConfig;
    use candle_core::{DType, Device};

    fn images(n: usize, seed: u64) -> (Vec<RasterImage>, Vec<RasterImage>) {
        synthetic_pairs(n, 16, 1, seed).unwrap().into_iter().map(|p| (p.sar, p.optical)).unzip()
    }

    #[test]
    fn same_set_scores_perfectly() {
        let (_, opt) = images(24, 1);
        let e = ProjectionEmbedder::default();
        assert!(fid(&opt, &opt, &e).unwrap().value < 1e-6);
        let r = compare_sets(&opt, &opt, &e, Direction::SarToOpt, "toy", &EvalConfig::default()).unwrap();
        assert!(r.fid < 1e-6);
        assert_eq!(r.psnr_mean, PSNR_CAP);
        assert!((r.ssim_mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fid_ignores_sample_order() {
        let (sar, opt) = images(20, 2);
        let e = ProjectionEmbedder::default();
        let mut rev = opt.clone();
        rev.reverse();
        let a = fid(&sar, &opt, &e).unwrap().value;
        let b = fid(&sar, &rev, &e).unwrap().value;
        assert!((a - b).abs() < 1e-9 * a.max(1.0));
        // different channel counts go through different projections but still score
        assert!(a > 0.0);
    }

    #[test]
    fn repeats_and_subsampling() {
        let (_, opt) = images(30, 3);
        let (_, other) = images(30, 4);
        let e = ProjectionEmbedder::default();
        let cfg = EvalConfig { samples: Some(20), repeats: 3, seed: 9 };
        let r = compare_sets(&opt, &other, &e, Direction::SarToOpt, "toy", &cfg).unwrap();
        assert_eq!(r.fid_repeats.len(), 3);
        assert_eq!(r.fid_samples, 20);
        assert_ne!(r.fid_repeats[0], r.fid_repeats[1]);
        let again = compare_sets(&opt, &other, &e, Direction::SarToOpt, "toy", &cfg).unwrap();
        assert_eq!(r, again);
        assert!(!r.rank_deficient);
        let small = compare_sets(&opt[..10], &other[..10], &e, Direction::SarToOpt, "toy", &EvalConfig::default()).unwrap();
        assert!(small.rank_deficient);
    }

    #[test]
    fn evaluate_scores_both_directions() {
        let nets = Networks::build(&ModelConfig::tiny(1), 0, DType::F32, &Device::Cpu).unwrap();
        let src = InMemorySource::new(synthetic_pairs(4, 16, 1, 5).unwrap());
        let [a, b] = evaluate(&nets, &src, &ProjectionEmbedder::default(), "toy", &EvalConfig::default()).unwrap();
        assert_eq!((a.direction, b.direction), (Direction::SarToOpt, Direction::OptToSar));
        assert_eq!(a.n_samples, 4);
        assert!(a.fid.is_finite() && b.ssim_mean.is_finite());
    }
}
