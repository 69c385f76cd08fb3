//! Image conditioning: 16×16 patch feature grids and foreground masks, read
//! from feature files or computed synthetically from part boxes.

mod features;
mod synthetic;

pub use features::{
    feature_file_bytes, load_feature_file, parse_feature_file, save_feature_file, ForegroundMask,
    PatchFeatureGrid, DINO_DIM, GRID, N_PATCHES, SYNTH_DIM,
};
pub use synthetic::{
    mask_from_silhouette, positional_code, sample_camera, synthetic_features, CameraSpec,
    IMAGE_SIZE, PATCH_PIXELS, POS_DIM, SLOT_COVERAGE, SLOT_DEPTH, SLOT_LABELS, SLOT_POS,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConditioningError {
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error("not a patch feature file")]
    BadMagic,
    #[error("unsupported feature file version {0}")]
    UnsupportedVersion(u32),
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("feature file is truncated")]
    TruncatedFile,
    #[error("feature grid contains non-finite values")]
    NonFinite,
    #[error("object is not in front of the camera")]
    DegenerateProjection,
}

pub type Result<T, E = ConditioningError> = std::result::Result<T, E>;
