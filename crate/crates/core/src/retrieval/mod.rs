//! Mesh-level assembly: choose the library object closest to a generated
//! abstraction, borrow its part meshes by label and stretch each one into
//! the generated box.

mod assemble;
mod library;
mod urdf;

pub use assemble::{
    assemble, fit_mesh_to_box, match_part_meshes, rank_candidates, select_candidate, AssembledObject,
    AssembledPart, Candidate, FitTransform, MeshSource, RetrievalConfig,
};
pub use library::{default_mesh, write_box_meshes, PartLibrary};
pub use urdf::{export_package, urdf_string, ExportManifest, AOJ_FILE, MESH_DIR, URDF_FILE};

use thiserror::Error;

use crate::dataset::DatasetError;
use crate::kinematics::{KinematicsError, SemanticLabel};
use crate::metrics::MetricsError;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("part library is empty")]
    EmptyLibrary,
    #[error("no default mesh for label {0}")]
    NoDefaultMesh(SemanticLabel),
    #[error("mesh has zero extent on some axis")]
    DegenerateMesh,
    #[error("library entry {id}: {reason}")]
    InvalidEntry { id: String, reason: String },
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error("invalid abstraction: {0}")]
    Invalid(#[from] KinematicsError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

pub type Result<T, E = RetrievalError> = std::result::Result<T, E>;
