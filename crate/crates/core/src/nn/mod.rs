//! Network building blocks, the translator and discriminator, and parameter archives.

pub mod arch;
pub mod discriminator;
pub mod init;
pub mod layer;
pub mod params;
pub mod translator;

pub use arch::{ArchReport, ParamCount};
pub use discriminator::{Discriminator, DiscriminatorConfig};
pub use layer::{apply_norm_stats, Mode, NormTape};
pub use params::ParamSet;
pub use translator::{Translator, TranslatorConfig};

use candle_core::Tensor;

use crate::error::Result;

/// Anything that maps an `(N, C, H, W)` image batch to another.
pub trait ImageToImage: Send + Sync {
    fn apply(&self, x: &Tensor, mode: &mut Mode) -> Result<Tensor>;
}

impl ImageToImage for Translator {
    fn apply(&self, x: &Tensor, mode: &mut Mode) -> Result<Tensor> {
        self.forward(x, mode)
    }
}
