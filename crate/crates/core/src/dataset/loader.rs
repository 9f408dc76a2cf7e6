//! Paired patch sources and the epoch-shuffled batch loader.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::manifest::{DatasetManifest, ManifestEntry, Split};
use crate::error::{Error, Result};
use crate::raster::{read_npy_patch, RasterImage};

/// A co-registered SAR/optical patch pair, both in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchPair {
    pub sar: RasterImage,
    pub optical: RasterImage,
    pub patch_id: String,
    pub split: Split,
}

impl PatchPair {
    pub fn new(sar: RasterImage, optical: RasterImage, patch_id: impl Into<String>, split: Split) -> Result<Self> {
        let patch_id = patch_id.into();
        if (sar.height(), sar.width()) != (optical.height(), optical.width()) {
            return Err(Error::Shape(format!(
                "{patch_id}: SAR {}x{} and optical {}x{} are not co-registered",
                sar.height(),
                sar.width(),
                optical.height(),
                optical.width()
            )));
        }
        for (name, img) in [("SAR", &sar), ("optical", &optical)] {
            if img.pixels().iter().any(|v| !(-1.0..=1.0).contains(v)) {
                return Err(Error::Validation(format!("{patch_id}: {name} values leave [-1, 1]")));
            }
        }
        Ok(Self {
            sar,
            optical,
            patch_id,
            split,
        })
    }
}

/// Random-access collection of patch pairs.
pub trait PairSource: Send + Sync {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn patch_id(&self, index: usize) -> &str;
    fn get(&self, index: usize) -> Result<PatchPair>;
}

/// Pairs held in memory (toy corpora, tests, benches).
#[derive(Debug, Clone, Default)]
pub struct InMemorySource {
    pub pairs: Vec<PatchPair>,
}

impl InMemorySource {
    pub fn new(pairs: Vec<PatchPair>) -> Self {
        Self { pairs }
    }
}

impl PairSource for InMemorySource {
    fn len(&self) -> usize {
        self.pairs.len()
    }
    fn patch_id(&self, index: usize) -> &str {
        &self.pairs[index].patch_id
    }
    fn get(&self, index: usize) -> Result<PatchPair> {
        self.pairs
            .get(index)
            .cloned()
            .ok_or_else(|| Error::Validation(format!("pair index {index} out of range")))
    }
}

/// One split of a manifest, loading patch files on demand.
#[derive(Debug, Clone)]
pub struct ManifestSource {
    manifest: DatasetManifest,
    entries: Vec<ManifestEntry>,
    split: Split,
}

impl ManifestSource {
    pub fn new(manifest: &DatasetManifest, split: Split) -> Result<Self> {
        let entries: Vec<ManifestEntry> = manifest.split_entries(split).into_iter().cloned().collect();
        if entries.is_empty() {
            return Err(Error::Validation(format!("the {split} split is empty")));
        }
        Ok(Self {
            manifest: manifest.clone(),
            entries,
            split,
        })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }
}

impl PairSource for ManifestSource {
    fn len(&self) -> usize {
        self.entries.len()
    }
    fn patch_id(&self, index: usize) -> &str {
        &self.entries[index].patch_id
    }
    fn get(&self, index: usize) -> Result<PatchPair> {
        let e = &self.entries[index];
        let sar = read_npy_patch(&self.manifest.resolve(&e.sar_path))?;
        let optical = read_npy_patch(&self.manifest.resolve(&e.opt_path))?;
        PatchPair::new(sar, optical, e.patch_id.clone(), self.split)
    }
}

/// Deterministic permutation of `0..n` for one epoch.
///
/// Each epoch draws from its own ChaCha stream, so any epoch's order can be
/// regenerated from `(seed, epoch)` alone.
pub fn epoch_permutation(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// Splits a sample count into epoch batches of indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchLoader {
    pub batch_size: usize,
    pub drop_last: bool,
    pub seed: u64,
}

impl BatchLoader {
    pub fn new(batch_size: usize, drop_last: bool, seed: u64) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::Validation("batch size must be positive".into()));
        }
        Ok(Self {
            batch_size,
            drop_last,
            seed,
        })
    }

    /// Index batches for `epoch`; every index appears exactly once unless the
    /// short tail batch is dropped.
    pub fn epoch_batches(&self, n: usize, epoch: u64) -> Result<Vec<Vec<usize>>> {
        if n == 0 {
            return Err(Error::Validation("cannot batch an empty split".into()));
        }
        let order = epoch_permutation(n, self.seed, epoch);
        Ok(order
            .chunks(self.batch_size)
            .filter(|c| !self.drop_last || c.len() == self.batch_size)
            .map(<[usize]>::to_vec)
            .collect())
    }

    /// Loads every batch of one epoch from `source`, lazily.
    pub fn load_epoch<'a, S: PairSource + ?Sized>(
        &self,
        source: &'a S,
        epoch: u64,
    ) -> Result<impl Iterator<Item = Result<Vec<PatchPair>>> + 'a> {
        let batches = self.epoch_batches(source.len(), epoch)?;
        Ok(batches
            .into_iter()
            .map(move |b| b.into_iter().map(|i| source.get(i)).collect()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn batch_counts() {
        let l = BatchLoader::new(1, false, 0).unwrap();
        assert_eq!(l.epoch_batches(8, 0).unwrap().len(), 8);
        let l = BatchLoader::new(4, false, 0).unwrap();
        let b = l.epoch_batches(10, 0).unwrap();
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 4, 2]);
        let l = BatchLoader::new(4, true, 0).unwrap();
        assert_eq!(l.epoch_batches(10, 0).unwrap().len(), 2);
    }

    #[test]
    fn each_epoch_covers_every_sample_once() {
        let l = BatchLoader::new(3, false, 42).unwrap();
        for epoch in 0..5 {
            let seen: Vec<usize> = l.epoch_batches(17, epoch).unwrap().concat();
            assert_eq!(seen.len(), 17);
            assert_eq!(seen.iter().copied().collect::<BTreeSet<_>>().len(), 17);
        }
    }

    #[test]
    fn reshuffles_between_epochs_reproducibly() {
        let l = BatchLoader::new(1, false, 7).unwrap();
        let e0 = l.epoch_batches(32, 0).unwrap();
        let e1 = l.epoch_batches(32, 1).unwrap();
        assert_ne!(e0, e1);
        assert_eq!(e1, l.epoch_batches(32, 1).unwrap());
    }

    #[test]
    fn empty_split_and_zero_batch_rejected() {
        assert!(BatchLoader::new(0, false, 0).is_err());
        assert!(BatchLoader::new(2, false, 0).unwrap().epoch_batches(0, 0).is_err());
    }
}
