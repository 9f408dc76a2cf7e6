use std::path::PathBuf;

use candle_core::Device;

use sar2opt_core::cycle::{load_pretrained, run_procedure, run_procedure_unpaired};
use sar2opt_core::dataset::{ManifestSource, Split};
use sar2opt_core::metrics::resolve_embedder;

use crate::config::RunConfig;
use crate::evaluate::annotate;
use crate::imaging::{expand_inputs, read_all};
use crate::prepare::open_manifest;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Pretrained checkpoint directory, run directory or `best` pointer.
    #[arg(long)]
    pretrained: PathBuf,
    /// Dataset whose test split is refined on and scored (default: data.root).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Unpaired SAR exemplars (normalized rasters). Without `--sar-dir` and
    /// `--opt-dir`, exemplars come from the dataset's training split.
    #[arg(long, requires = "opt_dir")]
    sar_dir: Option<PathBuf>,
    /// Unpaired optical exemplars (normalized rasters).
    #[arg(long, requires = "sar_dir")]
    opt_dir: Option<PathBuf>,
    /// Exemplars drawn per modality (default: all).
    #[arg(long)]
    n_unpaired: Option<usize>,
    #[arg(long)]
    cycle_weight: Option<f64>,
    /// "per-step" or "joint".
    #[arg(long)]
    alternation: Option<String>,
    #[arg(long)]
    max_epochs: Option<u64>,
    #[arg(long)]
    patience: Option<u32>,
    /// Start from fresh discriminators instead of the pretrained ones.
    #[arg(long)]
    reinit_discriminators: bool,
    #[arg(long)]
    embedder: Option<String>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    /// Output directory (default: `<output_root>/refine`).
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run(a: Args, mut cfg: RunConfig) -> anyhow::Result<()> {
    let c = &mut cfg.cycle;
    if let Some(v) = a.n_unpaired {
        c.n_unpaired = v;
    }
    if let Some(v) = a.cycle_weight {
        c.weight = v;
    }
    if let Some(v) = &a.alternation {
        c.alternation = v.clone();
    }
    if let Some(v) = a.max_epochs {
        c.max_epochs = v;
    }
    if let Some(v) = a.patience {
        c.patience = v;
    }
    if a.reinit_discriminators {
        c.reinit_discriminators = true;
    }
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

    // no from-scratch mode: a missing checkpoint is fatal
    let pretrained = load_pretrained(&a.pretrained, cfg.dtype()?, &Device::Cpu)?;
    let root = cfg.data_root();
    let manifest = open_manifest(&root)?;
    let test = ManifestSource::new(&manifest, Split::Test)?;
    let dataset = root.file_name().map_or("dataset".into(), |n| n.to_string_lossy().into_owned());
    let (embedder, note) = resolve_embedder(&cfg.metrics.embedder)?;
    let (cycle, eval) = (cfg.cycle_config()?, cfg.eval_config());
    let out = cfg.output_dir(a.out.as_deref(), "refine");
    cfg.persist(&out)?;

    let mut report = match (&a.sar_dir, &a.opt_dir) {
        (Some(s), Some(o)) => {
            let sar = read_all(&expand_inputs(std::slice::from_ref(s))?)?;
            let opt = read_all(&expand_inputs(std::slice::from_ref(o))?)?;
            log::info!("{} SAR and {} optical exemplars", sar.len(), opt.len());
            run_procedure_unpaired(&pretrained, &cycle, &test, &sar, &opt, embedder.as_ref(), &eval, &dataset, &out)?
        }
        _ => {
            let pool = ManifestSource::new(&manifest, Split::Train)?;
            run_procedure(&pretrained, &cycle, &test, &pool, embedder.as_ref(), &eval, &dataset, &out)?
        }
    };
    if note.is_some() {
        annotate(&mut report.before, &note);
        annotate(&mut report.after, &note);
        let dir = out.join("reports");
        for (tag, set) in [("before", &report.before), ("after", &report.after)] {
            for r in set.iter() {
                r.write(&dir, &format!("{tag}_{}", r.direction))?;
            }
        }
    }
    print!("{}", report.table);
    println!("refined checkpoint: {}", report.refined_dir.display());
    Ok(())
}
