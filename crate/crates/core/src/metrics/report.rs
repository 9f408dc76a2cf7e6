//! Metric reports: a human-readable text form and a `key=value` form.
//!
//! Key-value schema (one pair per line, values with 4 decimals):
//! `direction`, `dataset`, `embedder`, `n_samples`, `fid`, `fid_repeats`
//! (comma separated), `fid_samples`, `psnr_mean`, `ssim_mean`,
//! `rank_deficient`, and zero or more `note` lines.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Direction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Direction whose *outputs* were scored.
    pub direction: Direction,
    pub dataset: String,
    pub embedder: String,
    /// Pairs scored by PSNR/SSIM.
    pub n_samples: usize,
    /// Mean FID over repeats.
    pub fid: f64,
    pub fid_repeats: Vec<f64>,
    /// Samples per FID estimate.
    pub fid_samples: usize,
    /// Mean per-pair PSNR in dB, each pair capped at [`super::PSNR_CAP`].
    pub psnr_mean: f64,
    pub ssim_mean: f64,
    /// Any FID estimate used `n ≤ d` samples.
    pub rank_deficient: bool,
    pub notes: Vec<String>,
}

/// Generated-modality row label.
fn modality(d: Direction) -> &'static str {
    match d {
        Direction::SarToOpt => "Optical",
        Direction::OptToSar => "SAR",
    }
}

impl MetricReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "Evaluation report: {} ({})", self.direction.label(), self.dataset);
        let _ = writeln!(s, "  embedder      {}", self.embedder);
        let _ = writeln!(s, "  pairs         {}", self.n_samples);
        let _ = writeln!(
            s,
            "  FID           {:.4}  ({} repeat(s) of {} samples: {})",
            self.fid,
            self.fid_repeats.len(),
            self.fid_samples,
            self.fid_repeats.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(", ")
        );
        let _ = writeln!(s, "  PSNR (dB)     {:.4}", self.psnr_mean);
        let _ = writeln!(s, "  SSIM          {:.4}", self.ssim_mean);
        if self.rank_deficient {
            let _ = writeln!(s, "  WARNING: covariance rank deficient (samples <= embedding dim)");
        }
        for n in &self.notes {
            let _ = writeln!(s, "  NOTE: {n}");
        }
        s
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "direction={}", self.direction);
        let _ = writeln!(s, "dataset={}", self.dataset);
        let _ = writeln!(s, "embedder={}", self.embedder);
        let _ = writeln!(s, "n_samples={}", self.n_samples);
        let _ = writeln!(s, "fid={:.4}", self.fid);
        let reps: Vec<String> = self.fid_repeats.iter().map(|v| format!("{v:.4}")).collect();
        let _ = writeln!(s, "fid_repeats={}", reps.join(","));
        let _ = writeln!(s, "fid_samples={}", self.fid_samples);
        let _ = writeln!(s, "psnr_mean={:.4}", self.psnr_mean);
        let _ = writeln!(s, "ssim_mean={:.4}", self.ssim_mean);
        let _ = writeln!(s, "rank_deficient={}", self.rank_deficient);
        for n in &self.notes {
            let _ = writeln!(s, "note={}", n.replace('\n', " "));
        }
        s
    }

    /// Parses [`MetricReport::to_kv`] output (values carry 4 decimals).
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut r = MetricReport {
            direction: Direction::SarToOpt,
            dataset: String::new(),
            embedder: String::new(),
            n_samples: 0,
            fid: f64::NAN,
            fid_repeats: Vec::new(),
            fid_samples: 0,
            psnr_mean: f64::NAN,
            ssim_mean: f64::NAN,
            rank_deficient: false,
            notes: Vec::new(),
        };
        let bad = |k: &str, v: &str| Error::Validation(format!("report field {k}={v:?} is malformed"));
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| bad("line", line))?;
            match k {
                "direction" => r.direction = v.parse()?,
                "dataset" => r.dataset = v.into(),
                "embedder" => r.embedder = v.into(),
                "n_samples" => r.n_samples = v.parse().map_err(|_| bad(k, v))?,
                "fid" => r.fid = v.parse().map_err(|_| bad(k, v))?,
                "fid_repeats" => {
                    r.fid_repeats = v
                        .split(',')
                        .filter(|s| !s.is_empty())
                        .map(|s| s.parse().map_err(|_| bad(k, v)))
                        .collect::<Result<_>>()?
                }
                "fid_samples" => r.fid_samples = v.parse().map_err(|_| bad(k, v))?,
                "psnr_mean" => r.psnr_mean = v.parse().map_err(|_| bad(k, v))?,
                "ssim_mean" => r.ssim_mean = v.parse().map_err(|_| bad(k, v))?,
                "rank_deficient" => r.rank_deficient = v.parse().map_err(|_| bad(k, v))?,
                "note" => r.notes.push(v.into()),
                _ => return Err(Error::Validation(format!("unknown report field {k:?}"))),
            }
        }
        Ok(r)
    }

    /// Writes `<stem>.txt` and `<stem>.kv` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let txt = dir.join(format!("{stem}.txt"));
        let kv = dir.join(format!("{stem}.kv"));
        std::fs::write(&txt, self.to_text()).map_err(|e| Error::io(&txt, e))?;
        std::fs::write(&kv, self.to_kv()).map_err(|e| Error::io(&kv, e))?;
        Ok((txt, kv))
    }
}

/// Per-direction FID / PSNR / SSIM table.
pub fn summary_table(reports: &[MetricReport]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<10} {:>10} {:>10} {:>8} {:>6}", "", "FID", "PSNR(dB)", "SSIM", "n");
    for r in reports {
        let _ = writeln!(
            s,
            "{:<10} {:>10.4} {:>10.4} {:>8.4} {:>6}",
            modality(r.direction),
            r.fid,
            r.psnr_mean,
            r.ssim_mean,
            r.n_samples
        );
    }
    s
}

/// FID before and after unsupervised refinement, one row per direction.
pub fn refinement_table(before: &[MetricReport], after: &[MetricReport]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<10} {:>12} {:>14}", "", "supervised", "unsupervised");
    for b in before {
        let a = after.iter().find(|a| a.direction == b.direction);
        let _ = writeln!(
            s,
            "{:<10} {:>12.4} {:>14}",
            modality(b.direction),
            b.fid,
            a.map_or("-".to_string(), |a| format!("{:.4}", a.fid))
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report() -> MetricReport {
        MetricReport {
            direction: Direction::OptToSar,
            dataset: "toy".into(),
            embedder: "projection-16".into(),
            n_samples: 12,
            fid: 53.00671,
            fid_repeats: vec![52.5, 53.51342],
            fid_samples: 10,
            psnr_mean: 18.25,
            ssim_mean: 0.4321,
            rank_deficient: true,
            notes: vec!["fallback".into()],
        }
    }

    #[test]
    fn kv_round_trip_keeps_four_decimals() {
        let r = report();
        let kv = r.to_kv();
        assert!(kv.contains("fid=53.0067\n"));
        let back = MetricReport::from_kv(&kv).unwrap();
        assert_eq!(back.fid, 53.0067);
        assert_eq!(back.fid_repeats, vec![52.5, 53.5134]);
        assert_eq!(back.notes, r.notes);
        assert_eq!(back.direction, Direction::OptToSar);
        assert!(back.rank_deficient);
    }

    #[test]
    fn text_and_tables_mention_the_essentials() {
        let r = report();
        let t = r.to_text();
        assert!(t.contains("OPT->SAR") && t.contains("NOTE: fallback") && t.contains("WARNING"));
        assert!(summary_table(std::slice::from_ref(&r)).contains("SAR"));
        let mut after = r.clone();
        after.fid = 41.2;
        let table = refinement_table(&[r], &[after]);
        assert!(table.contains("53.0067") && table.contains("41.2000"));
    }
}
