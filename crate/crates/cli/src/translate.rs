use std::path::PathBuf;

use candle_core::Device;

use sar2opt_core::cycle::load_pretrained;
use sar2opt_core::dataset::{normalize_channels, normalize_optical};
use sar2opt_core::raster::read_raster;
use sar2opt_core::{Direction, Error};

use crate::config::RunConfig;
use crate::imaging::{expand_inputs, in_unit_range, pad_to_multiple, stem, write_pair, Pad};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Input rasters or directories of rasters.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Checkpoint directory, run directory or `best` pointer.
    #[arg(long)]
    checkpoint: PathBuf,
    /// sar2opt or opt2sar.
    #[arg(long, default_value = "sar2opt")]
    direction: Direction,
    /// Output directory (default: `<output_root>/translate/<direction>`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// How to handle sizes that are not a multiple of the network stride;
    /// padded outputs are cropped back to the input size.
    #[arg(long, value_enum, default_value_t = Pad::None)]
    pad: Pad,
    /// Inputs are raw rasters: SAR amplitudes are normalized per channel,
    /// optical values are mapped from 0..255 onto [-1, 1].
    #[arg(long)]
    normalize: bool,
    #[arg(long)]
    lambda: Option<f64>,
    /// "f32" or "f64".
    #[arg(long)]
    precision: Option<String>,
}

pub fn run(a: Args, mut cfg: RunConfig) -> anyhow::Result<()> {
    if let Some(v) = a.lambda {
        cfg.data.lambda = v;
    }
    if let Some(v) = &a.precision {
        cfg.precision = v.clone();
    }
    cfg.validate()?;
    let nets = load_pretrained(&a.checkpoint, cfg.dtype()?, &Device::Cpu)?;
    let t = nets.translator(a.direction);
    let tcfg = match a.direction {
        Direction::SarToOpt => nets.config().translator_a,
        Direction::OptToSar => nets.config().translator_b,
    };
    let out = cfg.output_dir(a.out.as_deref(), &format!("translate/{}", a.direction));
    cfg.persist(&out)?;

    let files = expand_inputs(&a.inputs)?;
    if files.is_empty() {
        return Err(Error::Validation("no input rasters found".into()).into());
    }
    for path in &files {
        let mut image = read_raster(path)?;
        if a.normalize {
            image = match a.direction {
                Direction::SarToOpt => normalize_channels(&image, cfg.data.lambda)?.0,
                Direction::OptToSar => normalize_optical(&image)?,
            };
        } else if !in_unit_range(&image) {
            return Err(Error::DegenerateInput(format!(
                "{} has values outside [-1, 1]; pass --normalize for raw rasters",
                path.display()
            ))
            .into());
        }
        if image.channels() != tcfg.in_channels {
            return Err(Error::Shape(format!(
                "{} has {} channel(s); the {} translator expects {}",
                path.display(),
                image.channels(),
                a.direction.label(),
                tcfg.in_channels
            ))
            .into());
        }
        let (h, w) = (image.height(), image.width());
        let m = tcfg.size_multiple();
        if a.pad == Pad::None && (h % m != 0 || w % m != 0) {
            return Err(Error::Shape(format!(
                "{} is {h}x{w}; height and width must be multiples of {m} \
                 (pass --pad reflect or --pad zero to pad and crop back)",
                path.display()
            ))
            .into());
        }
        let padded = pad_to_multiple(&image, m, a.pad)?;
        let y = t.translate(&padded)?.crop(0, 0, h, w)?;
        let written = write_pair(&out, &stem(path), &y)?;
        println!("{} -> {} ({h}x{w}x{})", path.display(), written.display(), y.channels());
    }
    Ok(())
}
