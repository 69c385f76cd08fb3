//! Object files, attribute-tensor encoding, augmentation and dataset
//! plumbing.

mod aoj;
mod augment;
mod cache;
mod encoding;
mod split;
pub mod synth;

pub use aoj::{
    load_object, object_to_json, parse_object, save_object, MeshAffine, MeshRef, ObjectRecord,
    SourceMeta,
};
pub use augment::{
    augment_dataset, augment_flip, augment_scale, augment_scale_by, augment_stack,
    augment_swap_handles, record_seed, AugmentConfig, HANDLE_JITTER, SCALE_RANGE,
};
pub use cache::{read_cache, write_cache, CachedObject};
pub use encoding::{
    decode_attributes, encode_attributes, AttributeTensor, ATTR_DIM, MIN_HALF_EXTENT, N_ATTRS,
    PART_STRIDE, ROW_AXIS, ROW_BBOX, ROW_LABEL, ROW_RANGE, ROW_TYPE,
};
pub use split::{split_dataset, DatasetManifest, ManifestEntry};

use thiserror::Error;

use crate::kinematics::KinematicsError;
use crate::mesh::MeshError;

/// Object categories, in the order used for the category one-hot.
pub const CATEGORIES: [&str; 7] = [
    "StorageFurniture",
    "Table",
    "Refrigerator",
    "Dishwasher",
    "Oven",
    "Washer",
    "Microwave",
];

pub fn category_index(name: &str) -> Option<usize> {
    CATEGORIES.iter().position(|c| c.eq_ignore_ascii_case(name))
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid object: {0}")]
    Validation(#[from] KinematicsError),
    #[error("object has {count} parts, the limit is {max}")]
    TooManyParts { count: usize, max: usize },
    #[error("tensor mask has {mask} parts but the graph has {graph} nodes")]
    MaskGraphMismatch { mask: usize, graph: usize },
    #[error("split ratios ({0}, {1}) must be nonnegative and sum to 1")]
    BadRatios(f64, f64),
    #[error("probability {0} is outside [0, 1]")]
    BadProbability(f64),
    #[error("object has no parts")]
    EmptyObject,
    #[error("cache file is malformed")]
    BadCache,
    #[error("cache file is truncated")]
    TruncatedCache,
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

pub type Result<T, E = DatasetError> = std::result::Result<T, E>;
