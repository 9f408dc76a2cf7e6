//! Two-way translation between SAR and optical imagery with residual encoder-decoder generators and patch critics.

pub mod cycle;
pub mod dataset;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod raster;
pub mod trainer;

pub use error::{Error, Result};
pub use losses::LossBundle;
pub use model::{Direction, ModelConfig, Networks};
pub use raster::RasterImage;
