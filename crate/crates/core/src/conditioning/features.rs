//! Patch feature grids and their binary file format (little-endian):
//!
//! ```text
//! "APFG" u32 version=1 u32 n_patches=256 u32 d_f
//! n_patches * d_f f32, row-major
//! 256 mask bytes (0 or 1)
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ConditioningError, Result};

pub const GRID: usize = 16;
pub const N_PATCHES: usize = GRID * GRID;
pub const SYNTH_DIM: usize = 32;
pub const DINO_DIM: usize = 768;

const MAGIC: &[u8; 4] = b"APFG";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchFeatureGrid {
    /// `N_PATCHES * d_f` values, patch-major; patch index is `row * 16 + col`.
    pub features: Vec<f32>,
    pub d_f: usize,
}

impl PatchFeatureGrid {
    pub fn new(features: Vec<f32>, d_f: usize) -> Result<Self> {
        if d_f == 0 || features.len() != N_PATCHES * d_f {
            return Err(ConditioningError::ShapeMismatch {
                expected: N_PATCHES * d_f,
                found: features.len(),
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(ConditioningError::NonFinite);
        }
        Ok(PatchFeatureGrid { features, d_f })
    }

    pub fn zeros(d_f: usize) -> Self {
        PatchFeatureGrid {
            features: vec![0.0; N_PATCHES * d_f],
            d_f,
        }
    }

    pub fn grid_shape(&self) -> (usize, usize) {
        (GRID, GRID)
    }

    pub fn patch(&self, i: usize) -> &[f32] {
        &self.features[i * self.d_f..(i + 1) * self.d_f]
    }

    pub fn patch_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.features[i * self.d_f..(i + 1) * self.d_f]
    }

    pub fn l2_distance(&self, other: &PatchFeatureGrid) -> f64 {
        self.features
            .iter()
            .zip(&other.features)
            .map(|(a, b)| ((a - b) as f64).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForegroundMask(pub Vec<bool>);

impl Default for ForegroundMask {
    fn default() -> Self {
        ForegroundMask(vec![false; N_PATCHES])
    }
}

impl ForegroundMask {
    pub fn count(&self) -> usize {
        self.0.iter().filter(|b| **b).count()
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i]
    }
}

pub fn feature_file_bytes(grid: &PatchFeatureGrid, mask: &ForegroundMask) -> Vec<u8> {
    let mut buf = Vec::with_capacity(16 + grid.features.len() * 4 + N_PATCHES);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(N_PATCHES as u32).to_le_bytes());
    buf.extend_from_slice(&(grid.d_f as u32).to_le_bytes());
    for v in &grid.features {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend(mask.0.iter().map(|b| *b as u8));
    buf
}

pub fn parse_feature_file(bytes: &[u8]) -> Result<(PatchFeatureGrid, ForegroundMask)> {
    if bytes.len() < 16 {
        return Err(ConditioningError::TruncatedFile);
    }
    if &bytes[..4] != MAGIC {
        return Err(ConditioningError::BadMagic);
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as usize;
    let (version, n, d_f) = (word(4), word(8), word(12));
    if version != VERSION as usize {
        return Err(ConditioningError::UnsupportedVersion(version as u32));
    }
    if n != N_PATCHES {
        return Err(ConditioningError::ShapeMismatch {
            expected: N_PATCHES,
            found: n,
        });
    }
    let payload = n
        .checked_mul(d_f)
        .and_then(|x| x.checked_mul(4))
        .ok_or(ConditioningError::TruncatedFile)?;
    let expected = 16 + payload + N_PATCHES;
    if bytes.len() < expected {
        return Err(ConditioningError::TruncatedFile);
    }
    if bytes.len() > expected {
        return Err(ConditioningError::ShapeMismatch {
            expected,
            found: bytes.len(),
        });
    }
    let features = bytes[16..16 + payload]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let mask = bytes[16 + payload..].iter().map(|b| *b != 0).collect();
    Ok((PatchFeatureGrid::new(features, d_f)?, ForegroundMask(mask)))
}

pub fn load_feature_file(path: &Path) -> Result<(PatchFeatureGrid, ForegroundMask)> {
    let bytes = std::fs::read(path).map_err(|e| ConditioningError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    parse_feature_file(&bytes)
}

pub fn save_feature_file(path: &Path, grid: &PatchFeatureGrid, mask: &ForegroundMask) -> Result<()> {
    std::fs::write(path, feature_file_bytes(grid, mask)).map_err(|e| ConditioningError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}
