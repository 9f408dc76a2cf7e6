//! Evaluation metrics: Fréchet distance of embedded sets (FID), PSNR, SSIM,
//! and reports.

pub mod embedder;
pub mod evaluate;
pub mod frechet;
pub mod quality;
pub mod report;
pub mod stats;

pub use embedder::{resolve_embedder, Embedder, ProjectionEmbedder};
pub use evaluate::{compare_sets, embed_all, evaluate, fid, EvalConfig, FidResult};
pub use frechet::{frechet_distance, sqrt_psd};
pub use quality::{psnr, ssim, PSNR_CAP};
pub use report::{refinement_table, summary_table, MetricReport};
pub use stats::{gaussian_stats, GaussianStats};
