//! Evaluation: part matching, pairwise part distances in resting and
//! articulated states, sibling overlap and report aggregation.

mod boxes;
mod chamfer;
mod eval;
mod hungarian;
mod polytope;
mod report;

pub use boxes::{d_cdist_pair, d_giou_pair, intersection_volume, OrientedBox, MIN_EXTENT};
pub use chamfer::{chamfer_points, d_cd_pair, DEFAULT_POINTS};
pub use eval::{
    aor, aor_at, eval_d, match_parts, DistanceKind, EvalConfig, EvalObject, MatchResult, StateMode,
};
pub use hungarian::{hungarian, Assignment};
pub use polytope::ConvexPolytope;
pub use report::{report, summarize, to_csv, MetricReport, ReportSummary, CSV_HEADER};

use thiserror::Error;

use crate::kinematics::KinematicsError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("cost matrix is empty")]
    EmptyMatrix,
    #[error("cost matrix rows differ in length")]
    RaggedMatrix,
    #[error("cost matrix contains a non-finite entry")]
    NonFiniteCost,
    #[error("mesh has no surface to sample")]
    EmptyMesh,
    #[error("object has no parts")]
    EmptyObject,
    #[error("object has zero extent; cannot normalize scale")]
    DegenerateScale,
    #[error("chamfer distance requested but meshes are missing")]
    MissingMeshes,
    #[error("{meshes} meshes supplied for {parts} parts")]
    MeshCountMismatch { parts: usize, meshes: usize },
    #[error("articulated evaluation needs at least 2 states, got {0}")]
    InvalidStateCount(usize),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

pub type Result<T, E = MetricsError> = std::result::Result<T, E>;
