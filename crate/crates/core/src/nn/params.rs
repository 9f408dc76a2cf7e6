//! Named parameter sets and their on-disk archive.

use std::collections::HashMap;
use std::path::Path;

use candle_core::{Device, Tensor, Var};

use crate::error::{Error, Result};

/// Archive format version written into every parameter file.
pub const FORMAT_VERSION: &str = "1";

/// Trainable parameters plus non-trainable buffers (normalization running
/// statistics), each under a stable dotted layer path.
///
/// `Clone` shares storage; use [`ParamSet::deep_clone`] for an independent copy.
#[derive(Clone, Debug, Default)]
pub struct ParamSet {
    params: Vec<(String, Var)>,
    buffers: Vec<(String, Var)>,
}

fn check_unique(list: &[(String, Var)], name: &str) {
    assert!(list.iter().all(|(n, _)| n != name), "duplicate parameter name {name}");
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn add_param(&mut self, name: String, var: Var) -> Var {
        check_unique(&self.params, &name);
        self.params.push((name, var.clone()));
        var
    }

    pub(crate) fn add_buffer(&mut self, name: String, var: Var) -> Var {
        check_unique(&self.buffers, &name);
        self.buffers.push((name, var.clone()));
        var
    }

    pub fn params(&self) -> &[(String, Var)] {
        &self.params
    }

    pub fn buffers(&self) -> &[(String, Var)] {
        &self.buffers
    }

    pub fn param(&self, name: &str) -> Option<&Var> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn buffer(&self, name: &str) -> Option<&Var> {
        self.buffers.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    /// Number of trainable scalars.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|(_, v)| v.elem_count()).sum()
    }

    /// Parameters followed by buffers.
    pub fn all(&self) -> impl Iterator<Item = &(String, Var)> {
        self.params.iter().chain(self.buffers.iter())
    }

    /// Overwrites every parameter and buffer with the values of `other`
    /// (same names, shapes and dtype required).
    pub fn copy_from(&self, other: &ParamSet) -> Result<()> {
        if self.params.len() != other.params.len() || self.buffers.len() != other.buffers.len() {
            return Err(Error::Shape("parameter sets have different layouts".into()));
        }
        for ((n, v), (m, w)) in self.all().zip(other.all()) {
            if n != m {
                return Err(Error::Shape(format!("parameter {n} does not match {m}")));
            }
            v.set(&w.as_detached_tensor())?;
        }
        Ok(())
    }

    /// Independent copy with fresh storage.
    pub fn deep_clone(&self) -> Result<ParamSet> {
        let copy = |list: &[(String, Var)]| -> Result<Vec<(String, Var)>> {
            list.iter()
                .map(|(n, v)| Ok((n.clone(), Var::from_tensor(&v.as_detached_tensor().copy()?)?)))
                .collect()
        };
        Ok(ParamSet { params: copy(&self.params)?, buffers: copy(&self.buffers)? })
    }

    /// Writes all tensors (in their own dtype) with string metadata.
    pub fn save(&self, path: &Path, metadata: HashMap<String, String>) -> Result<()> {
        let mut meta = metadata;
        meta.insert("format_version".into(), FORMAT_VERSION.into());
        let tensors = self
            .all()
            .map(|(n, v)| (n.clone(), v.as_detached_tensor()))
            .collect::<Vec<_>>();
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        safetensors::serialize_to_file(tensors, Some(meta), path)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
    }

    /// Loads values saved by [`ParamSet::save`] into this set (converting
    /// dtype) and returns the file's metadata.
    pub fn load(&self, path: &Path) -> Result<HashMap<String, String>> {
        let (tensors, meta) = read_archive(path)?;
        for (n, v) in self.all() {
            let t = tensors
                .get(n)
                .ok_or_else(|| Error::Checkpoint(format!("{}: missing tensor {n}", path.display())))?;
            if t.dims() != v.dims() {
                return Err(Error::Checkpoint(format!(
                    "{}: tensor {n} has shape {:?}, expected {:?}",
                    path.display(),
                    t.dims(),
                    v.dims()
                )));
            }
            v.set(&t.to_dtype(v.dtype())?)?;
        }
        if tensors.len() != self.params.len() + self.buffers.len() {
            return Err(Error::Checkpoint(format!(
                "{}: archive has {} tensors, network expects {}",
                path.display(),
                tensors.len(),
                self.params.len() + self.buffers.len()
            )));
        }
        Ok(meta)
    }
}

/// Reads an archive's tensors (on CPU) and metadata, checking the format version.
pub fn read_archive(path: &Path) -> Result<(HashMap<String, Tensor>, HashMap<String, String>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (_, header) = safetensors::SafeTensors::read_metadata(&bytes)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    let meta = header.metadata().clone().unwrap_or_default();
    match meta.get("format_version").map(String::as_str) {
        Some(FORMAT_VERSION) => {}
        other => {
            return Err(Error::Checkpoint(format!(
                "{}: unsupported archive format version {other:?}",
                path.display()
            )))
        }
    }
    let tensors = candle_core::safetensors::load_buffer(&bytes, &Device::Cpu)?;
    Ok((tensors, meta))
}

/// Reads only the metadata block of an archive.
pub fn read_archive_metadata(path: &Path) -> Result<HashMap<String, String>> {
    read_archive(path).map(|(_, m)| m)
}
