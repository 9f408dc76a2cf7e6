//! Non-overlapping square tiling of co-registered rasters.

use ndarray::{s, Array3};

use crate::error::{Error, Result};
use crate::raster::RasterImage;

/// Patch edge length used for training.
pub const PATCH_SIZE: usize = 256;

/// One tile cut from a larger raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Tile {
    /// `<scene>_y<row offset>_x<col offset>`; stable across runs.
    pub patch_id: String,
    /// Pixel offset of the top-left corner in the source raster.
    pub y0: usize,
    pub x0: usize,
    pub image: RasterImage,
}

/// Builds the identifier that encodes scene and tile coordinates.
pub fn patch_id(scene: &str, y0: usize, x0: usize) -> String {
    format!("{scene}_y{y0:05}_x{x0:05}")
}

/// Cuts `⌊H/size⌋·⌊W/size⌋` tiles in row-major order; right and bottom margins are dropped.
pub fn tile(raster: &RasterImage, size: usize, scene: &str) -> Result<Vec<Tile>> {
    if size == 0 {
        return Err(Error::Validation("tile size must be positive".into()));
    }
    if raster.height() < size || raster.width() < size {
        return Err(Error::Validation(format!(
            "raster {}x{} is smaller than one {size}x{size} tile",
            raster.height(),
            raster.width()
        )));
    }
    if scene.contains(',') || scene.contains(char::is_whitespace) {
        return Err(Error::Validation(format!(
            "scene name {scene:?} must not contain commas or whitespace"
        )));
    }
    let rows = raster.height() / size;
    let cols = raster.width() / size;
    let mut tiles = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let (y0, x0) = (r * size, c * size);
            tiles.push(Tile {
                patch_id: patch_id(scene, y0, x0),
                y0,
                x0,
                image: raster.crop(y0, x0, size, size)?,
            });
        }
    }
    Ok(tiles)
}

/// Reassembles tiles at their recorded offsets into the covered region.
pub fn untile(tiles: &[Tile]) -> Result<RasterImage> {
    let first = tiles
        .first()
        .ok_or_else(|| Error::Validation("no tiles to reassemble".into()))?;
    let c = first.image.channels();
    let h = tiles.iter().map(|t| t.y0 + t.image.height()).max().unwrap_or(0);
    let w = tiles.iter().map(|t| t.x0 + t.image.width()).max().unwrap_or(0);
    let mut out = Array3::<f32>::zeros((h, w, c));
    for t in tiles {
        if t.image.channels() != c {
            return Err(Error::Shape("tiles disagree on channel count".into()));
        }
        out.slice_mut(s![t.y0..t.y0 + t.image.height(), t.x0..t.x0 + t.image.width(), ..])
            .assign(t.image.pixels());
    }
    RasterImage::new(out, first.image.source_tag.clone())
}
