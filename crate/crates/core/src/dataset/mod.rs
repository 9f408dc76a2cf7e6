//! Data preparation: normalization, polarimetric coding, tiling, pairing and batching.

pub mod despeckle;
pub mod loader;
pub mod manifest;
pub mod normalize;
pub mod pauli;
pub mod prepare;
pub mod synthetic;
pub mod tiling;

pub use despeckle::Despeckle;
pub use loader::{epoch_permutation, BatchLoader, InMemorySource, ManifestSource, PairSource, PatchPair};
pub use manifest::{pair_and_split, DatasetManifest, ManifestEntry, PatchRef, Split};
pub use normalize::{normalize_channels, normalize_optical, normalize_sar, NormalizationParams, DEFAULT_LAMBDA};
pub use pauli::{pauli_components, pauli_intensities, pauli_rgb, PauliComponents, ScatteringMatrix};
pub use prepare::{prepare_dataset, PrepareConfig, SarInput, SceneInput};
pub use tiling::{patch_id, tile, untile, Tile, PATCH_SIZE};
