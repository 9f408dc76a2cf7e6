use std::fs::OpenOptions;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::Context;
use candle_core::Device;

use sar2opt_core::dataset::{ManifestSource, PairSource, Split};
use sar2opt_core::trainer::{compute_report, train, TrainState};

use crate::config::RunConfig;
use crate::prepare::open_manifest;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Dataset directory or manifest file (default: data.root).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Run directory for checkpoints and logs (default: `<output_root>/train`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Continue from a checkpoint directory, run directory or `best` pointer.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// "standard" or "tiny".
    #[arg(long)]
    model: Option<String>,
    /// "f32" or "f64".
    #[arg(long)]
    precision: Option<String>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    max_epochs: Option<u64>,
    /// Weight of the L1 term; 0 trains with the adversarial term alone.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Epochs without improvement before stopping.
    #[arg(long)]
    patience: Option<u32>,
    /// Drop the adversarial term (pure-L1 ablation).
    #[arg(long)]
    no_adversarial: bool,
}

fn apply(a: &Args, cfg: &mut RunConfig) {
    let t = &mut cfg.trainer;
    if let Some(v) = &a.model {
        cfg.model = v.clone();
    }
    if let Some(v) = &a.precision {
        cfg.precision = v.clone();
    }
    if let Some(v) = &a.data {
        cfg.data.root = v.clone();
    }
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {$(if let Some(v) = a.$flag { t.$field = v; })*};
    }
    set!(replicas => replicas, max_epochs => max_epochs, beta => beta, batch_size => batch_size,
         learning_rate => learning_rate, patience => patience);
    if a.no_adversarial {
        t.adversarial = false;
    }
}

pub fn run(a: Args, mut cfg: RunConfig) -> anyhow::Result<()> {
    apply(&a, &mut cfg);
    cfg.validate()?;
    let manifest = open_manifest(&cfg.data_root())?;
    let source = ManifestSource::new(&manifest, Split::Train)?;
    if source.is_empty() {
        return Err(sar2opt_core::Error::Validation("training split is empty".into()).into());
    }
    let sample = source.get(0)?;
    let dtype = cfg.dtype()?;
    let mut state = match &a.resume {
        Some(ckpt) => {
            let mut s = TrainState::load(ckpt, dtype, &Device::Cpu)?;
            log::info!("resuming after epoch {} (step {})", s.epoch, s.global_step);
            // the checkpoint's own trainer settings win, except for the epoch budget
            s.config.max_epochs = cfg.trainer.max_epochs;
            let t = &mut cfg.trainer;
            (t.learning_rate, t.batch_size, t.beta, t.adversarial, t.replicas, t.patience, t.drop_last) = (
                s.config.learning_rate,
                s.config.batch_size,
                s.config.beta,
                s.config.adversarial,
                s.config.num_replicas,
                s.config.early_stop_patience,
                s.config.drop_last,
            );
            (t.adam_beta1, t.adam_beta2) = (s.config.adam_beta1, s.config.adam_beta2);
            cfg.seed = s.config.seed;
            s
        }
        None => {
            let model = cfg.model_config(sample.sar.channels())?;
            TrainState::new(&model, &cfg.trainer_config(), dtype, &Device::Cpu)?
        }
    };
    let out = cfg.output_dir(a.out.as_deref(), "train");
    cfg.persist(&out)?;

    let log_path = out.join("train_log.csv");
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)
        .with_context(|| format!("opening {}", log_path.display()))?;
    let mut log = BufWriter::new(file);
    let outcome = train(&mut state, &source, Some(&out), &mut log);
    log.flush().with_context(|| format!("writing {}", log_path.display()))?;
    let outcome = outcome?;

    let report = compute_report(
        &state.nets.config(),
        sample.sar.height(),
        state.config.num_replicas,
        Some(outcome.samples_per_second),
    );
    let report_path = out.join("compute_report.txt");
    std::fs::write(&report_path, report.to_string()).with_context(|| format!("writing {}", report_path.display()))?;
    println!("{report}");
    println!(
        "trained {} epoch(s){}; last checkpoint {}; best {}",
        outcome.epochs_run,
        if outcome.stopped_early { " (early stop)" } else { "" },
        outcome.last_checkpoint.as_ref().map_or("-".into(), |p| p.display().to_string()),
        outcome.best_checkpoint.as_ref().map_or("-".into(), |p| p.display().to_string()),
    );
    Ok(())
}
