use std::path::PathBuf;

use sar2opt_core::dataset::prepare::MANIFEST_FILE;
use sar2opt_core::dataset::{prepare_dataset, SarInput, SceneInput, Split};

use crate::config::RunConfig;
use crate::ConfigError;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// SAR raster of a scene (repeat per scene). With `--pol quad`, a directory
    /// holding complex `hh.npy`, `hv.npy`, `vh.npy`, `vv.npy`.
    #[arg(long, required = true)]
    sar: Vec<PathBuf>,
    /// Co-registered optical raster, one per `--sar`.
    #[arg(long, required = true)]
    opt: Vec<PathBuf>,
    /// Scene names used in patch ids (default: optical file stems).
    #[arg(long)]
    name: Vec<String>,
    /// Polarimetric mode: single (amplitude rasters) or quad (Pauli RGB).
    #[arg(long)]
    pol: Option<String>,
    /// Dataset directory (default: data.root, else `<output_root>/dataset`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    tile_size: Option<usize>,
    #[arg(long)]
    test_fraction: Option<f64>,
    /// External despeckling command, run on each raw SAR raster.
    #[arg(long)]
    despeckle: Option<String>,
}

fn scene_name(path: &std::path::Path) -> String {
    crate::imaging::stem(path).chars().map(|c| if c == ',' || c.is_whitespace() { '_' } else { c }).collect()
}

pub fn run(a: Args, mut cfg: RunConfig) -> anyhow::Result<()> {
    if let Some(v) = a.pol {
        cfg.data.pol = v;
    }
    if let Some(v) = a.lambda {
        cfg.data.lambda = v;
    }
    if let Some(v) = a.tile_size {
        cfg.data.tile_size = v;
    }
    if let Some(v) = a.test_fraction {
        cfg.data.test_fraction = v;
    }
    if let Some(v) = a.despeckle {
        cfg.data.despeckle = v;
    }
    if let Some(out) = a.out {
        cfg.data.root = out;
    }
    cfg.validate()?;
    if a.sar.len() != a.opt.len() {
        return Err(ConfigError(format!("{} --sar inputs but {} --opt inputs", a.sar.len(), a.opt.len())).into());
    }
    if !a.name.is_empty() && a.name.len() != a.sar.len() {
        return Err(ConfigError(format!("{} --name values for {} scenes", a.name.len(), a.sar.len())).into());
    }
    let quad = cfg.quad_pol()?;
    let scenes: Vec<SceneInput> = a
        .sar
        .iter()
        .zip(&a.opt)
        .enumerate()
        .map(|(i, (s, o))| SceneInput {
            name: a.name.get(i).cloned().unwrap_or_else(|| scene_name(o)),
            sar: if quad {
                SarInput::QuadPol { hh: s.join("hh.npy"), hv: s.join("hv.npy"), vh: s.join("vh.npy"), vv: s.join("vv.npy") }
            } else {
                SarInput::Amplitude(s.clone())
            },
            optical: o.clone(),
        })
        .collect();
    let out = cfg.data_root();
    let manifest = prepare_dataset(&scenes, &cfg.prepare_config()?, &out)?;
    cfg.persist(&out)?;
    println!(
        "{}: {} pairs ({} train, {} test)",
        out.join(MANIFEST_FILE).display(),
        manifest.entries.len(),
        manifest.count(Split::Train),
        manifest.count(Split::Test)
    );
    Ok(())
}

/// Reads the manifest from a dataset directory or a manifest file path.
pub fn open_manifest(path: &std::path::Path) -> anyhow::Result<sar2opt_core::dataset::DatasetManifest> {
    let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
    if !file.is_file() {
        return Err(ConfigError(format!("no dataset manifest at {} (run `sar2opt prepare` first)", file.display())).into());
    }
    Ok(sar2opt_core::dataset::DatasetManifest::read(&file)?)
}
