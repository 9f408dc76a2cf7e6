use std::path::PathBuf;

use anyhow::Context;
use candle_core::Device;

use sar2opt_core::cycle::load_pretrained;
use sar2opt_core::dataset::{ManifestSource, PairSource, Split};
use sar2opt_core::metrics::{compare_sets, evaluate, resolve_embedder, summary_table, MetricReport};
use sar2opt_core::{Direction, Error};

use crate::config::RunConfig;
use crate::prepare::open_manifest;
use crate::ConfigError;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Checkpoint directory, run directory or `best` pointer.
    #[arg(long, required_unless_present = "identity")]
    checkpoint: Option<PathBuf>,
    /// Dataset directory or manifest file (default: data.root).
    #[arg(long)]
    data: Option<PathBuf>,
    /// "test" or "train".
    #[arg(long, default_value = "test")]
    split: String,
    /// "projection" or "inception".
    #[arg(long)]
    embedder: Option<String>,
    /// Number of subsampled FID repeats to average.
    #[arg(long)]
    repeats: Option<usize>,
    /// Images per FID repeat (default: the whole split).
    #[arg(long)]
    samples: Option<usize>,
    /// Score the ground truth against itself (a smoke test; FID should be ~0).
    #[arg(long)]
    identity: bool,
    /// Report directory (default: `<output_root>/evaluate`).
    #[arg(long)]
    out: Option<PathBuf>,
}

pub(crate) fn parse_split(s: &str) -> anyhow::Result<Split> {
    match s {
        "train" => Ok(Split::Train),
        "test" => Ok(Split::Test),
        other => Err(ConfigError(format!("split must be \"train\" or \"test\", got {other:?}")).into()),
    }
}

/// Prints a fallback-embedder note where nobody can miss it and attaches it to every report.
pub(crate) fn annotate(reports: &mut [MetricReport], note: &Option<String>) {
    if let Some(n) = note {
        eprintln!("WARNING: {n}");
        for r in reports.iter_mut() {
            if !r.notes.contains(n) {
                r.notes.push(n.clone());
            }
        }
    }
}

pub fn run(a: Args, mut cfg: RunConfig) -> anyhow::Result<()> {
    if let Some(v) = &a.data {
        cfg.data.root = v.clone();
    }
    if let Some(v) = &a.embedder {
        cfg.metrics.embedder = v.clone();
    }
    if let Some(v) = a.repeats {
        cfg.metrics.repeats = v;
    }
    if let Some(v) = a.samples {
        cfg.metrics.samples = v;
    }
    cfg.validate()?;
    let split = parse_split(&a.split)?;
    let root = cfg.data_root();
    let manifest = open_manifest(&root)?;
    let source = ManifestSource::new(&manifest, split)?;
    if source.is_empty() {
        return Err(Error::Validation(format!("the {} split is empty", a.split)).into());
    }
    let dataset = root.file_name().map_or("dataset".into(), |n| n.to_string_lossy().into_owned());
    let (embedder, note) = resolve_embedder(&cfg.metrics.embedder)?;
    let eval = cfg.eval_config();

    let mut reports = if a.identity {
        let pairs = (0..source.len()).map(|i| source.get(i)).collect::<sar2opt_core::Result<Vec<_>>>()?;
        let (sar, opt): (Vec<_>, Vec<_>) = pairs.into_iter().map(|p| (p.sar, p.optical)).unzip();
        let mut r = [
            compare_sets(&opt, &opt, embedder.as_ref(), Direction::SarToOpt, &dataset, &eval)?,
            compare_sets(&sar, &sar, embedder.as_ref(), Direction::OptToSar, &dataset, &eval)?,
        ];
        for x in r.iter_mut() {
            x.notes.push("identity self-evaluation: ground truth scored against itself".into());
        }
        r
    } else {
        let ckpt = a.checkpoint.as_deref().expect("clap enforces --checkpoint");
        let nets = load_pretrained(ckpt, cfg.dtype()?, &Device::Cpu)?;
        evaluate(&nets, &source, embedder.as_ref(), &dataset, &eval)?
    };
    annotate(&mut reports, &note);

    let out = cfg.output_dir(a.out.as_deref(), "evaluate");
    cfg.persist(&out)?;
    for r in &reports {
        r.write(&out, &r.direction.to_string())?;
    }
    let table = summary_table(&reports);
    let path = out.join("summary.txt");
    std::fs::write(&path, &table).with_context(|| format!("writing {}", path.display()))?;
    print!("{table}");
    Ok(())
}
