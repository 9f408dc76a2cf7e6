//! Scene → normalized patch corpus: despeckle, normalize, tile, pair, split.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::dataset::despeckle::Despeckle;
use crate::dataset::manifest::{pair_and_split, DatasetManifest, PatchRef};
use crate::dataset::normalize::{normalize_channels, normalize_optical, DEFAULT_LAMBDA};
use crate::dataset::pauli::{pauli_intensities, ScatteringMatrix};
use crate::dataset::tiling::{tile, PATCH_SIZE};
use crate::error::{Error, Result};
use crate::raster::{read_complex_npy, read_raster, write_npy, RasterImage};

pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct PrepareConfig {
    pub lambda: f64,
    pub tile_size: usize,
    pub test_fraction: f64,
    pub seed: u64,
    pub despeckle: Despeckle,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            tile_size: PATCH_SIZE,
            test_fraction: 0.2,
            seed: 0,
            despeckle: Despeckle::PassThrough,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SarInput {
    /// Detected amplitude raster (one or more channels, each normalized on its own).
    Amplitude(PathBuf),
    /// Complex `.npy` files for the four polarimetric channels.
    QuadPol { hh: PathBuf, hv: PathBuf, vh: PathBuf, vv: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SceneInput {
    pub name: String,
    pub sar: SarInput,
    pub optical: PathBuf,
}

fn load_sar(input: &SarInput) -> Result<RasterImage> {
    match input {
        SarInput::Amplitude(p) => read_raster(p),
        SarInput::QuadPol { hh, hv, vh, vv } => {
            let s = ScatteringMatrix::new(
                read_complex_npy(hh)?,
                read_complex_npy(hv)?,
                read_complex_npy(vh)?,
                read_complex_npy(vv)?,
            )?;
            let mut img = pauli_intensities(&s)?;
            img.source_tag = hh.display().to_string();
            Ok(img)
        }
    }
}

/// Normalizes a raw co-registered scene pair. Despeckling runs on raw
/// intensities, before the threshold normalization.
pub fn normalize_scene(sar: &RasterImage, optical: &RasterImage, cfg: &PrepareConfig) -> Result<(RasterImage, RasterImage)> {
    if (sar.height(), sar.width()) != (optical.height(), optical.width()) {
        return Err(Error::Validation(format!(
            "scene is not co-registered: SAR {}x{}, optical {}x{}",
            sar.height(),
            sar.width(),
            optical.height(),
            optical.width()
        )));
    }
    let filtered = cfg.despeckle.apply(sar)?;
    let (sar, _) = normalize_channels(&filtered, cfg.lambda)?;
    Ok((sar, normalize_optical(optical)?))
}

/// Tiles a normalized scene pair and writes `sar/<id>.npy` and `opt/<id>.npy` under `out_dir`.
pub fn write_scene_patches(
    name: &str,
    sar: &RasterImage,
    optical: &RasterImage,
    tile_size: usize,
    out_dir: &Path,
) -> Result<(Vec<PatchRef>, Vec<PatchRef>)> {
    let write = |kind: &str, img: &RasterImage| -> Result<Vec<PatchRef>> {
        std::fs::create_dir_all(out_dir.join(kind)).map_err(|e| Error::io(out_dir.join(kind), e))?;
        tile(img, tile_size, name)?
            .par_iter()
            .map(|t| {
                let rel = PathBuf::from(kind).join(format!("{}.npy", t.patch_id));
                write_npy(&out_dir.join(&rel), &t.image)?;
                Ok(PatchRef { patch_id: t.patch_id.clone(), path: rel })
            })
            .collect()
    };
    Ok((write("sar", sar)?, write("opt", optical)?))
}

/// Runs the whole preparation pipeline and writes `manifest.txt` into `out_dir`.
pub fn prepare_dataset(scenes: &[SceneInput], cfg: &PrepareConfig, out_dir: &Path) -> Result<DatasetManifest> {
    if scenes.is_empty() {
        return Err(Error::Validation("no scenes to prepare".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut sar_refs = Vec::new();
    let mut opt_refs = Vec::new();
    for scene in scenes {
        log::info!("preparing scene {}", scene.name);
        let sar = load_sar(&scene.sar)?;
        let opt = read_raster(&scene.optical)?;
        let (sar, opt) = normalize_scene(&sar, &opt, cfg)?;
        let (s, o) = write_scene_patches(&scene.name, &sar, &opt, cfg.tile_size, out_dir)?;
        sar_refs.extend(s);
        opt_refs.extend(o);
    }
    let manifest = pair_and_split(&sar_refs, &opt_refs, cfg.test_fraction, cfg.seed, out_dir)?;
    manifest.write(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}
