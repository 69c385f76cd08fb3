//! Articulated object data model and forward kinematics.
//!
//! Parts carry world-frame attributes expressed at the resting state. Motion
//! composes down the kinematic tree: a part's pose is its parent's pose
//! followed by its own joint displacement, so a handle riding a door swings
//! with the door.

mod graph;
mod normalize;
mod transform;
mod types;

pub use graph::{adjacency_matrix, validate_graph, AdjacencyMatrix, ConnectivityGraph, GraphNode};
pub use normalize::{
    apply_affine, normalize_object, normalize_with_transform, transform_object, union_aabb,
    Similarity,
};
pub use transform::{
    box_corners_posed, joint_transform, pose_parts, sample_states, ArticulationState,
    RigidTransform,
};
pub use types::{
    Aabb, ArticulatedAbstraction, Joint, JointType, PartAbstraction, PartId, SemanticLabel, Vec3,
    DEFAULT_SCREW_PITCH, MAX_PARTS,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KinematicsError {
    #[error("connectivity graph contains a cycle through part {0}")]
    CycleDetected(PartId),
    #[error("connectivity graph has multiple roots: {0:?}")]
    MultipleRoots(Vec<PartId>),
    #[error("part {0} is not connected to the graph")]
    DisconnectedNode(PartId),
    #[error("root part {0} is not labeled base")]
    RootNotBase(PartId),
    #[error("part {child} references missing parent {parent}")]
    DanglingParent { child: PartId, parent: PartId },
    #[error("duplicate part id {0}")]
    DuplicateNode(PartId),
    #[error("connectivity graph is empty")]
    EmptyGraph,
    #[error("object has {count} parts, the limit is {max}")]
    TooManyParts { count: usize, max: usize },
    #[error("union bounding box has zero extent")]
    DegenerateExtent,
    #[error("joint coordinate {0} is outside [0, 1]")]
    InvalidQ(f64),
    #[error("state count must be at least 2, got {0}")]
    InvalidK(usize),
    #[error("part {part}: {reason}")]
    InvalidJoint { part: PartId, reason: String },
    #[error("part {part}: bounding box min exceeds max")]
    InvalidBox { part: PartId },
}

pub type Result<T, E = KinematicsError> = std::result::Result<T, E>;
