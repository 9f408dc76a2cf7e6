//! Pairing of SAR/optical tiles, the random train/test split, and the
//! manifest text format.
//!
//! ```text
//! # sar2opt manifest v1
//! seed: 7
//! test_fraction: 0.2
//! train: 8
//! test: 2
//! patch_id,sar_path,opt_path,split
//! scene_y00000_x00000,sar/scene_y00000_x00000.npy,opt/scene_y00000_x00000.npy,train
//! ```
//!
//! Relative paths are resolved against the manifest's directory.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const MANIFEST_MAGIC: &str = "# sar2opt manifest v1";
const COLUMNS: &str = "patch_id,sar_path,opt_path,split";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::Validation(format!("unknown split {other:?}"))),
        }
    }
}

/// A stored patch: identifier plus the file holding it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchRef {
    pub patch_id: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub patch_id: String,
    pub sar_path: PathBuf,
    pub opt_path: PathBuf,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub seed: u64,
    pub test_fraction: f64,
    /// Directory that relative entry paths are resolved against.
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn count(&self, split: Split) -> usize {
        self.entries.iter().filter(|e| e.split == split).count()
    }

    pub fn split_entries(&self, split: Split) -> Vec<&ManifestEntry> {
        self.entries.iter().filter(|e| e.split == split).collect()
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(MANIFEST_MAGIC);
        out.push('\n');
        out.push_str(&format!("seed: {}\n", self.seed));
        out.push_str(&format!("test_fraction: {}\n", self.test_fraction));
        out.push_str(&format!("train: {}\n", self.count(Split::Train)));
        out.push_str(&format!("test: {}\n", self.count(Split::Test)));
        out.push_str(COLUMNS);
        out.push('\n');
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{}\n",
                e.patch_id,
                e.sar_path.display(),
                e.opt_path.display(),
                e.split
            ));
        }
        out
    }

    pub fn parse(text: &str, root: impl Into<PathBuf>) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim() == MANIFEST_MAGIC => {}
            _ => return Err(Error::Validation("missing manifest header line".into())),
        }
        let mut header = BTreeMap::new();
        let mut saw_columns = false;
        for (_, line) in lines.by_ref() {
            let line = line.trim();
            if line == COLUMNS {
                saw_columns = true;
                break;
            }
            let (k, v) = line
                .split_once(':')
                .ok_or_else(|| Error::Validation(format!("bad manifest header line {line:?}")))?;
            header.insert(k.trim().to_string(), v.trim().to_string());
        }
        if !saw_columns {
            return Err(Error::Validation("manifest has no column header".into()));
        }
        let field = |k: &str| {
            header
                .get(k)
                .ok_or_else(|| Error::Validation(format!("manifest header lacks {k:?}")))
        };
        let parse_err = |k: &str| Error::Validation(format!("manifest header {k:?} is malformed"));
        let seed: u64 = field("seed")?.parse().map_err(|_| parse_err("seed"))?;
        let test_fraction: f64 = field("test_fraction")?
            .parse()
            .map_err(|_| parse_err("test_fraction"))?;
        let n_train: usize = field("train")?.parse().map_err(|_| parse_err("train"))?;
        let n_test: usize = field("test")?.parse().map_err(|_| parse_err("test"))?;

        let mut entries = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 4 {
                return Err(Error::Validation(format!(
                    "manifest line {} has {} fields, expected 4",
                    i + 1,
                    cols.len()
                )));
            }
            entries.push(ManifestEntry {
                patch_id: cols[0].to_string(),
                sar_path: cols[1].into(),
                opt_path: cols[2].into(),
                split: cols[3].parse()?,
            });
        }
        let m = Self {
            entries,
            seed,
            test_fraction,
            root: root.into(),
        };
        if m.count(Split::Train) != n_train || m.count(Split::Test) != n_test {
            return Err(Error::Validation(format!(
                "manifest counts disagree with header: {} train / {} test listed, header says {n_train}/{n_test}",
                m.count(Split::Train),
                m.count(Split::Test)
            )));
        }
        let mut seen = BTreeSet::new();
        for e in &m.entries {
            if !seen.insert(e.patch_id.as_str()) {
                return Err(Error::Validation(format!("duplicate patch id {}", e.patch_id)));
            }
        }
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, root)
    }
}

/// Number of test samples for a split fraction (nearest integer).
pub fn test_count(total: usize, test_fraction: f64) -> usize {
    ((total as f64) * test_fraction).round() as usize
}

/// Pairs tiles by id and draws a seeded random test subset.
///
/// The result does not depend on the input order of either tile list.
pub fn pair_and_split(
    sar_tiles: &[PatchRef],
    opt_tiles: &[PatchRef],
    test_fraction: f64,
    seed: u64,
    root: impl Into<PathBuf>,
) -> Result<DatasetManifest> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::Validation(format!(
            "test fraction must lie in [0, 1), got {test_fraction}"
        )));
    }
    let index = |tiles: &[PatchRef]| -> Result<BTreeMap<String, PathBuf>> {
        let mut m = BTreeMap::new();
        for t in tiles {
            if t.patch_id.contains(',') {
                return Err(Error::Validation(format!("patch id {:?} contains a comma", t.patch_id)));
            }
            if m.insert(t.patch_id.clone(), t.path.clone()).is_some() {
                return Err(Error::Validation(format!("duplicate patch id {}", t.patch_id)));
            }
        }
        Ok(m)
    };
    let sar = index(sar_tiles)?;
    let opt = index(opt_tiles)?;
    let unmatched: Vec<String> = sar
        .keys()
        .filter(|k| !opt.contains_key(*k))
        .chain(opt.keys().filter(|k| !sar.contains_key(*k)))
        .cloned()
        .collect();
    if !unmatched.is_empty() {
        return Err(Error::Pairing(unmatched));
    }

    let mut ids: Vec<&String> = sar.keys().collect();
    let n_test = test_count(ids.len(), test_fraction);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let test: BTreeSet<&String> = ids[..n_test].iter().copied().collect();

    let entries = sar
        .iter()
        .map(|(id, sar_path)| ManifestEntry {
            patch_id: id.clone(),
            sar_path: sar_path.clone(),
            opt_path: opt[id].clone(),
            split: if test.contains(id) { Split::Test } else { Split::Train },
        })
        .collect();
    Ok(DatasetManifest {
        entries,
        seed,
        test_fraction,
        root: root.into(),
    })
}
