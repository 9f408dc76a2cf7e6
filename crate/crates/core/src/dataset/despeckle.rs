//! Optional speckle-filter stage run before normalization.
//!
//! The filter itself is an external program. Its command line is a template
//! in which `{input}` and `{output}` are replaced by paths of float32 `.npy`
//! rasters; the program must write the filtered raster to `{output}`.

use std::path::PathBuf;
use std::process::Command;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::raster::{read_raster, write_npy, RasterImage};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum Despeckle {
    #[default]
    PassThrough,
    External {
        command: String,
    },
}

static SCRATCH_COUNTER: AtomicU64 = AtomicU64::new(0);

fn scratch_path(stem: &str) -> PathBuf {
    let n = SCRATCH_COUNTER.fetch_add(1, Ordering::Relaxed);
    std::env::temp_dir().join(format!("sar2opt-{}-{n}-{stem}.npy", std::process::id()))
}

impl Despeckle {
    pub fn from_command(command: Option<&str>) -> Self {
        match command.map(str::trim) {
            None | Some("") => Despeckle::PassThrough,
            Some(c) => Despeckle::External { command: c.to_string() },
        }
    }

    pub fn apply(&self, raster: &RasterImage) -> Result<RasterImage> {
        let command = match self {
            Despeckle::PassThrough => return Ok(raster.clone()),
            Despeckle::External { command } => command,
        };
        if !command.contains("{input}") || !command.contains("{output}") {
            return Err(Error::Validation(format!(
                "despeckle command {command:?} must contain {{input}} and {{output}}"
            )));
        }
        let input = scratch_path("in");
        let output = scratch_path("out");
        write_npy(&input, raster)?;
        let line = command
            .replace("{input}", &input.display().to_string())
            .replace("{output}", &output.display().to_string());
        let status = Command::new("sh").arg("-c").arg(&line).status();
        let _ = std::fs::remove_file(&input);
        let status = status.map_err(|e| Error::External(format!("{line}: {e}")))?;
        if !status.success() {
            let _ = std::fs::remove_file(&output);
            return Err(Error::External(format!("{line}: exited with {status}")));
        }
        let filtered = read_raster(&output);
        let _ = std::fs::remove_file(&output);
        let mut filtered = filtered?;
        if filtered.pixels().dim() != raster.pixels().dim() {
            return Err(Error::External(format!(
                "despeckle output {:?} does not match input {:?}",
                filtered.pixels().dim(),
                raster.pixels().dim()
            )));
        }
        filtered.source_tag = raster.source_tag.clone();
        Ok(filtered)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    fn img() -> RasterImage {
        RasterImage::new(Array3::from_shape_fn((4, 4, 1), |(y, x, _)| (y + x) as f32), "d").unwrap()
    }

    #[test]
    fn pass_through_is_identity() {
        assert_eq!(Despeckle::from_command(None).apply(&img()).unwrap(), img());
        assert_eq!(Despeckle::from_command(Some("  ")), Despeckle::PassThrough);
    }

    #[test]
    fn external_copy_command_round_trips() {
        let d = Despeckle::from_command(Some("cp {input} {output}"));
        assert_eq!(d.apply(&img()).unwrap(), img());
    }

    #[test]
    fn failing_command_is_reported() {
        let d = Despeckle::from_command(Some("false {input} {output}"));
        assert!(matches!(d.apply(&img()), Err(Error::External(_))));
        let d = Despeckle::from_command(Some("true"));
        assert!(matches!(d.apply(&img()), Err(Error::Validation(_))));
    }
}
