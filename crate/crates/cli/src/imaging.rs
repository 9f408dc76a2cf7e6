//! Raster plumbing for the commands: directory listing, padding, output pairs.

use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::ValueEnum;
use ndarray::Array3;

use sar2opt_core::raster::{read_raster, write_npy, write_preview_png};
use sar2opt_core::RasterImage;

const EXTENSIONS: [&str; 6] = ["npy", "tif", "tiff", "png", "jpg", "jpeg"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Pad {
    /// Reject inputs whose size is not a multiple of the network stride.
    None,
    /// Mirror the image across its bottom and right edges.
    Reflect,
    /// Fill with zeros (mid-grey on the [-1, 1] scale).
    Zero,
}

fn reflect(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let r = i % period;
    if r < n {
        r
    } else {
        period - r
    }
}

/// Grows `image` at the bottom/right to the next multiple of `m`.
pub fn pad_to_multiple(image: &RasterImage, m: usize, mode: Pad) -> sar2opt_core::Result<RasterImage> {
    let (h, w, c) = image.pixels().dim();
    let (ph, pw) = (h.div_ceil(m) * m, w.div_ceil(m) * m);
    if (ph, pw) == (h, w) || mode == Pad::None {
        return Ok(image.clone());
    }
    let src = image.pixels();
    let out = Array3::from_shape_fn((ph, pw, c), |(y, x, k)| match mode {
        Pad::Zero if y >= h || x >= w => 0.0,
        _ => src[[reflect(y, h), reflect(x, w), k]],
    });
    RasterImage::new(out, image.source_tag.clone())
}

/// Supported raster files directly inside `dir`, sorted by name.
pub fn list_rasters(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Expands directories into their raster files; plain files pass through.
pub fn expand_inputs(inputs: &[PathBuf]) -> anyhow::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            out.extend(list_rasters(p)?);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

pub fn read_all(paths: &[PathBuf]) -> sar2opt_core::Result<Vec<RasterImage>> {
    paths.iter().map(|p| read_raster(p)).collect()
}

pub fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "image".into())
}

/// Writes `<stem>.npy` (float, [-1, 1]) and `<stem>.png` (8-bit preview).
pub fn write_pair(dir: &Path, stem: &str, image: &RasterImage) -> sar2opt_core::Result<PathBuf> {
    let npy = dir.join(format!("{stem}.npy"));
    write_npy(&npy, image)?;
    write_preview_png(&dir.join(format!("{stem}.png")), image)?;
    Ok(npy)
}

pub fn in_unit_range(image: &RasterImage) -> bool {
    image.pixels().iter().all(|v| (-1.0..=1.0).contains(v))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize) -> RasterImage {
        RasterImage::new(Array3::from_shape_fn((h, w, 1), |(y, x, _)| (y * w + x) as f32), "r").unwrap()
    }

    #[test]
    fn reflect_indices_mirror_without_repeating_the_edge() {
        let got: Vec<usize> = (0..8).map(|i| reflect(i, 4)).collect();
        assert_eq!(got, [0, 1, 2, 3, 2, 1, 0, 1]);
        assert_eq!(reflect(5, 1), 0);
    }

    #[test]
    fn padding_keeps_the_original_corner() {
        let img = ramp(5, 6);
        for mode in [Pad::Reflect, Pad::Zero] {
            let p = pad_to_multiple(&img, 4, mode).unwrap();
            assert_eq!(p.pixels().dim(), (8, 8, 1));
            assert_eq!(p.crop(0, 0, 5, 6).unwrap().pixels(), img.pixels());
        }
        let z = pad_to_multiple(&img, 4, Pad::Zero).unwrap();
        assert_eq!(z.pixels()[[7, 7, 0]], 0.0);
        let r = pad_to_multiple(&img, 4, Pad::Reflect).unwrap();
        assert_eq!(r.pixels()[[5, 0, 0]], img.pixels()[[3, 0, 0]]);
        assert_eq!(pad_to_multiple(&img, 1, Pad::Reflect).unwrap().pixels(), img.pixels());
    }
}
