use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub object: PathBuf,
    #[serde(default)]
    pub features: Vec<PathBuf>,
    #[serde(default)]
    pub split: String,
}

/// A JSON list of entries; relative paths resolve against the manifest's
/// directory.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| DatasetError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let mut m: DatasetManifest =
            serde_json::from_str(&text).map_err(|e| DatasetError::Parse(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for e in &mut m.entries {
            if e.object.is_relative() {
                e.object = base.join(&e.object);
            }
            for f in &mut e.features {
                if f.is_relative() {
                    *f = base.join(&*f);
                }
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("serializable");
        std::fs::write(path, text).map_err(|e| DatasetError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }

    /// Fails on the first referenced file that does not exist.
    pub fn check_files(&self) -> Result<()> {
        for e in &self.entries {
            for p in std::iter::once(&e.object).chain(&e.features) {
                if !p.exists() {
                    return Err(DatasetError::Io {
                        path: p.display().to_string(),
                        reason: "referenced file does not exist".into(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn with_split(&self, tag: &str) -> Vec<&ManifestEntry> {
        self.entries.iter().filter(|e| e.split == tag).collect()
    }
}

/// Seeded partition by object, so every view of an object lands in one
/// split. Returns the manifest with `split` set to `train` or `test`.
pub fn split_dataset(m: &DatasetManifest, ratios: (f64, f64), seed: u64) -> Result<DatasetManifest> {
    let (train, test) = ratios;
    if train < 0.0 || test < 0.0 || ((train + test) - 1.0).abs() > 1e-9 {
        return Err(DatasetError::BadRatios(train, test));
    }
    let mut objects: Vec<&PathBuf> = m
        .entries
        .iter()
        .map(|e| &e.object)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    objects.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (train * objects.len() as f64).round() as usize;
    let train_set: BTreeSet<&PathBuf> = objects[..n_train].iter().copied().collect();
    let entries = m
        .entries
        .iter()
        .map(|e| ManifestEntry {
            split: if train_set.contains(&e.object) { "train" } else { "test" }.into(),
            ..e.clone()
        })
        .collect();
    Ok(DatasetManifest { entries })
}
