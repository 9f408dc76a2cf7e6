//! Raster container plus the thin reader/writer layer used by the pipeline.
//!
//! Pixels are stored row-major as `height × width × channels` `f32`. Readers
//! accept `.npy` arrays (real or complex), TIFF/GeoTIFF rasters (georeferencing
//! tags are ignored; inputs are expected to be co-registered upstream) and
//! PNG/JPEG images.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use ndarray::{s, Array2, Array3, ArrayD, ArrayView2, Axis, Ix2, Ix3};
use ndarray_npy::{ReadNpyExt, WriteNpyExt};
use num_complex::Complex32;

use crate::error::{Error, Result};

/// A real-valued multi-channel raster.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    pixels: Array3<f32>,
    /// Free-form provenance (platform, resolution, file name).
    pub source_tag: String,
}

impl RasterImage {
    /// Wraps a `height × width × channels` array, rejecting non-finite pixels.
    pub fn new(pixels: Array3<f32>, source_tag: impl Into<String>) -> Result<Self> {
        if let Some(pos) = pixels.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "raster contains a non-finite pixel at flat index {pos}"
            )));
        }
        if pixels.is_empty() {
            return Err(Error::Validation("raster has no pixels".into()));
        }
        Ok(Self {
            pixels,
            source_tag: source_tag.into(),
        })
    }

    /// Single-channel raster from a 2-D array.
    pub fn from_plane(plane: Array2<f32>, source_tag: impl Into<String>) -> Result<Self> {
        Self::new(plane.insert_axis(Axis(2)), source_tag)
    }

    pub fn height(&self) -> usize {
        self.pixels.dim().0
    }

    pub fn width(&self) -> usize {
        self.pixels.dim().1
    }

    pub fn channels(&self) -> usize {
        self.pixels.dim().2
    }

    pub fn pixels(&self) -> &Array3<f32> {
        &self.pixels
    }

    pub fn into_pixels(self) -> Array3<f32> {
        self.pixels
    }

    pub fn channel(&self, c: usize) -> ArrayView2<'_, f32> {
        self.pixels.index_axis(Axis(2), c)
    }

    /// Copies out the `h × w` window whose top-left corner is `(y0, x0)`.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<Self> {
        if y0 + h > self.height() || x0 + w > self.width() {
            return Err(Error::Shape(format!(
                "crop {h}x{w}@({y0},{x0}) exceeds raster {}x{}",
                self.height(),
                self.width()
            )));
        }
        Ok(Self {
            pixels: self.pixels.slice(s![y0..y0 + h, x0..x0 + w, ..]).to_owned(),
            source_tag: self.source_tag.clone(),
        })
    }

    /// NCHW tensor with a leading batch axis of one.
    pub fn to_tensor(&self, dtype: DType, device: &Device) -> Result<Tensor> {
        let (h, w, c) = self.pixels.dim();
        let data: Vec<f32> = self.pixels.iter().copied().collect();
        let t = Tensor::from_vec(data, (h, w, c), device)?
            .permute((2, 0, 1))?
            .unsqueeze(0)?
            .to_dtype(dtype)?
            .contiguous()?;
        Ok(t)
    }

    /// Inverse of [`RasterImage::to_tensor`]; accepts `(1, C, H, W)` or `(C, H, W)`.
    pub fn from_tensor(t: &Tensor, source_tag: impl Into<String>) -> Result<Self> {
        let t = match t.rank() {
            4 => {
                if t.dim(0)? != 1 {
                    return Err(Error::Shape(format!(
                        "expected a single image, got batch of {}",
                        t.dim(0)?
                    )));
                }
                t.squeeze(0)?
            }
            3 => t.clone(),
            r => return Err(Error::Shape(format!("expected rank 3 or 4 tensor, got {r}"))),
        };
        let (c, h, w) = t.dims3()?;
        let data = t
            .permute((1, 2, 0))?
            .to_dtype(DType::F32)?
            .flatten_all()?
            .to_vec1::<f32>()?;
        let pixels = Array3::from_shape_vec((h, w, c), data)
            .map_err(|e| Error::Shape(e.to_string()))?;
        Self::new(pixels, source_tag)
    }
}

/// Stacks images of identical shape into an `(N, C, H, W)` tensor.
pub fn stack_tensor(images: &[&RasterImage], dtype: DType, device: &Device) -> Result<Tensor> {
    let first = images
        .first()
        .ok_or_else(|| Error::Validation("cannot stack an empty image list".into()))?;
    let dims = first.pixels().dim();
    let mut parts = Vec::with_capacity(images.len());
    for img in images {
        if img.pixels().dim() != dims {
            return Err(Error::Shape(format!(
                "cannot stack {:?} with {:?}",
                img.pixels().dim(),
                dims
            )));
        }
        parts.push(img.to_tensor(dtype, device)?);
    }
    Ok(Tensor::cat(&parts, 0)?)
}

/// Reads any supported raster into native pixel units.
///
/// Integer formats keep their raw values (e.g. 0..255 for 8-bit optical,
/// raw amplitudes for 16-bit SAR); nothing is rescaled here.
pub fn read_raster(path: &Path) -> Result<RasterImage> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    let tag = path.display().to_string();
    match ext.as_str() {
        "npy" => read_npy_raster(path, tag),
        "tif" | "tiff" => read_tiff(path, tag),
        "png" | "jpg" | "jpeg" => read_image_file(path, tag),
        other => Err(Error::UnsupportedFormat(format!(
            "{} (extension {other:?})",
            path.display()
        ))),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn dyn_to_raster(arr: ArrayD<f32>, tag: String) -> Result<RasterImage> {
    match arr.ndim() {
        2 => {
            let a = arr
                .into_dimensionality::<Ix2>()
                .map_err(|e| Error::Shape(e.to_string()))?;
            RasterImage::from_plane(a, tag)
        }
        3 => {
            let a = arr
                .into_dimensionality::<Ix3>()
                .map_err(|e| Error::Shape(e.to_string()))?;
            RasterImage::new(a, tag)
        }
        n => Err(Error::Shape(format!(
            "npy raster must be 2-D or 3-D (H×W[×C]), got {n}-D"
        ))),
    }
}

fn read_npy_raster(path: &Path, tag: String) -> Result<RasterImage> {
    macro_rules! try_as {
        ($t:ty) => {
            if let Ok(a) = ArrayD::<$t>::read_npy(open(path)?) {
                return dyn_to_raster(a.mapv(|v| v as f32), tag);
            }
        };
    }
    if let Ok(a) = ArrayD::<f32>::read_npy(open(path)?) {
        return dyn_to_raster(a, tag);
    }
    try_as!(f64);
    try_as!(u8);
    try_as!(u16);
    try_as!(i16);
    try_as!(u32);
    try_as!(i32);
    Err(Error::UnsupportedFormat(format!(
        "{}: npy dtype must be a real float or integer type",
        path.display()
    )))
}

fn read_tiff(path: &Path, tag: String) -> Result<RasterImage> {
    use tiff::decoder::{Decoder, DecodingResult};
    let tiff_err = |e: tiff::TiffError| Error::UnsupportedFormat(format!("{}: {e}", path.display()));
    let mut dec = Decoder::new(open(path)?).map_err(tiff_err)?;
    let (w, h) = dec.dimensions().map_err(tiff_err)?;
    let data: Vec<f32> = match dec.read_image().map_err(tiff_err)? {
        DecodingResult::U8(v) => v.into_iter().map(f32::from).collect(),
        DecodingResult::U16(v) => v.into_iter().map(f32::from).collect(),
        DecodingResult::U32(v) => v.into_iter().map(|x| x as f32).collect(),
        DecodingResult::U64(v) => v.into_iter().map(|x| x as f32).collect(),
        DecodingResult::F16(v) => v.into_iter().map(|x| x.to_f32()).collect(),
        DecodingResult::F32(v) => v,
        DecodingResult::F64(v) => v.into_iter().map(|x| x as f32).collect(),
        DecodingResult::I8(v) => v.into_iter().map(f32::from).collect(),
        DecodingResult::I16(v) => v.into_iter().map(f32::from).collect(),
        DecodingResult::I32(v) => v.into_iter().map(|x| x as f32).collect(),
        DecodingResult::I64(v) => v.into_iter().map(|x| x as f32).collect(),
    };
    let (h, w) = (h as usize, w as usize);
    if h * w == 0 || !data.len().is_multiple_of(h * w) {
        return Err(Error::Shape(format!(
            "{}: {} samples do not tile a {h}x{w} raster",
            path.display(),
            data.len()
        )));
    }
    let c = data.len() / (h * w);
    let pixels = Array3::from_shape_vec((h, w, c), data).map_err(|e| Error::Shape(e.to_string()))?;
    RasterImage::new(pixels, tag)
}

fn read_image_file(path: &Path, tag: String) -> Result<RasterImage> {
    let img = image::open(path)
        .map_err(|e| Error::UnsupportedFormat(format!("{}: {e}", path.display())))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let gray = matches!(
        img.color(),
        image::ColorType::L8 | image::ColorType::L16 | image::ColorType::La8 | image::ColorType::La16
    );
    let sixteen = matches!(
        img.color(),
        image::ColorType::L16 | image::ColorType::La16 | image::ColorType::Rgb16 | image::ColorType::Rgba16
    );
    // 16-bit images are brought to the 8-bit scale so optical inputs share one range.
    let scale = if sixteen { 255.0 / 65535.0 } else { 1.0 };
    let pixels = if gray {
        let buf = img.into_luma16();
        let data = buf.into_raw().into_iter().map(|v| {
            if sixteen {
                v as f32 * scale
            } else {
                (v as f32 / 257.0).round()
            }
        });
        Array3::from_shape_vec((h, w, 1), data.collect())
    } else if sixteen {
        let buf = img.into_rgb16();
        Array3::from_shape_vec(
            (h, w, 3),
            buf.into_raw().into_iter().map(|v| v as f32 * scale).collect(),
        )
    } else {
        let buf = img.into_rgb8();
        Array3::from_shape_vec((h, w, 3), buf.into_raw().into_iter().map(f32::from).collect())
    }
    .map_err(|e| Error::Shape(e.to_string()))?;
    RasterImage::new(pixels, tag)
}

/// Reads a complex 2-D `.npy` (`complex64` or `complex128`) scattering channel.
pub fn read_complex_npy(path: &Path) -> Result<Array2<Complex32>> {
    if let Ok(a) = Array2::<Complex32>::read_npy(open(path)?) {
        return Ok(a);
    }
    let a = Array2::<num_complex::Complex64>::read_npy(open(path)?)?;
    Ok(a.mapv(|z| Complex32::new(z.re as f32, z.im as f32)))
}

/// Writes the raster as an `H × W × C` float32 `.npy` file.
pub fn write_npy(path: &Path, image: &RasterImage) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    image.pixels().write_npy(std::io::BufWriter::new(file))?;
    Ok(())
}

/// Reads a float32 `.npy` patch written by [`write_npy`].
pub fn read_npy_patch(path: &Path) -> Result<RasterImage> {
    let a = Array3::<f32>::read_npy(open(path)?)?;
    RasterImage::new(a, path.display().to_string())
}

/// 8-bit preview of a `[-1, 1]` raster (grayscale for one channel, RGB for three).
pub fn write_preview_png(path: &Path, image: &RasterImage) -> Result<()> {
    let to_u8 = |v: f32| (((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round()) as u8;
    let (h, w, c) = image.pixels().dim();
    let result = match c {
        1 => {
            let data: Vec<u8> = image.pixels().iter().map(|&v| to_u8(v)).collect();
            image::GrayImage::from_raw(w as u32, h as u32, data)
                .ok_or_else(|| Error::Shape("preview buffer size".into()))?
                .save(path)
        }
        3 => {
            let data: Vec<u8> = image.pixels().iter().map(|&v| to_u8(v)).collect();
            image::RgbImage::from_raw(w as u32, h as u32, data)
                .ok_or_else(|| Error::Shape("preview buffer size".into()))?
                .save(path)
        }
        n => {
            return Err(Error::UnsupportedFormat(format!(
                "preview needs 1 or 3 channels, got {n}"
            )))
        }
    };
    result.map_err(|e| Error::UnsupportedFormat(format!("{}: {e}", path.display())))
}
