//! Request and response bodies.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::conditioning::CameraSpec;
use crate::graph::{GraphSource, ImageRef};
use crate::kinematics::{ConnectivityGraph, PartId};
use crate::metrics::EvalConfig;
use crate::pipeline::PartPin;
use crate::retrieval::{Candidate, ExportManifest, MeshSource, RetrievalConfig};

/// Where conditioning features come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureInput {
    /// A patch feature file on the server.
    Path(PathBuf),
    Inline {
        d_f: usize,
        features: Vec<f32>,
        #[serde(default)]
        mask: Option<Vec<bool>>,
    },
    /// Synthetic features rendered from an AOJ object.
    Synthetic {
        object: Value,
        #[serde(default)]
        camera: Option<CameraSpec>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predictor {
    #[default]
    Stub,
    Vlm,
    GroundTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictGraphRequest {
    #[serde(default)]
    pub predictor: Predictor,
    #[serde(default)]
    pub features: Option<FeatureInput>,
    #[serde(default)]
    pub image: Option<ImageRef>,
    #[serde(default)]
    pub graph: Option<ConnectivityGraph>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictGraphResponse {
    pub graph: ConnectivityGraph,
    pub source: GraphSource,
    pub raw_response: String,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateRequest {
    #[serde(default)]
    pub features: Option<FeatureInput>,
    #[serde(default)]
    pub graph: Option<ConnectivityGraph>,
    #[serde(default)]
    pub category: Option<String>,
    #[serde(default)]
    pub omega: Option<f64>,
    #[serde(default = "one")]
    pub num_samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub pins: Vec<PartPin>,
    /// Also assemble and package every sample with the loaded library.
    #[serde(default)]
    pub export: bool,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleOut {
    pub seed: u64,
    /// AOJ object.
    pub object: Value,
    /// Attribute rows per part in graph order.
    pub rows: Vec<[[f64; 6]; 5]>,
    pub asset_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub checkpoint: String,
    pub graph: ConnectivityGraph,
    pub graph_source: GraphSource,
    pub samples: Vec<SampleOut>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectRef {
    /// A registered object id.
    Id(String),
    /// An inline AOJ object.
    Object(Value),
    /// The sidecar AOJ of an exported asset (with meshes).
    Asset(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateRequest {
    pub gen: ObjectRef,
    pub gt: ObjectRef,
    #[serde(default)]
    pub config: Option<EvalConfig>,
    /// Row id in the report; defaults to the ground-truth id.
    #[serde(default)]
    pub id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrieveRequest {
    /// AOJ object to assemble.
    pub object: Value,
    /// Name of the library to use; must match the loaded one when given.
    #[serde(default)]
    pub library: Option<String>,
    #[serde(default)]
    pub config: Option<RetrievalConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartProvenance {
    pub part: PartId,
    pub source: MeshSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrieveResponse {
    pub asset_id: String,
    pub library: String,
    pub candidate: Candidate,
    pub parts: Vec<PartProvenance>,
    pub manifest: ExportManifest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub checkpoint: Option<String>,
    pub library: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadRequest {
    pub path: PathBuf,
    #[serde(default)]
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegisterResponse {
    pub id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDetail {
    pub code: String,
    pub message: String,
}
