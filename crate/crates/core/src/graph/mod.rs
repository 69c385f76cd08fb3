//! Part-connectivity graph prediction and scoring.

mod parse;
mod prompt;
mod stub;
mod topology;
mod vlm;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{validate_graph, ConnectivityGraph, KinematicsError};

pub use parse::{format_graph, parse_response, SynonymTable};
pub use prompt::{
    build_prompt, example_set, response_schema, system_instruction, ChatMessage, ContentPart, ImageRef, ImageUrl,
    MessageContent, PromptExample, PROMPT_VERSION,
};
pub use stub::predict_stub;
pub use topology::{canonical_form, graph_topology_accuracy};
pub use vlm::{predict_vlm, VlmClient, VlmConfig};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("prompt needs at least one in-context example")]
    NoExamples,
    #[error("unknown example set {0:?}")]
    UnknownExampleSet(String),
    #[error("cannot read image: {0}")]
    Image(String),
    #[error("response has no parseable graph block")]
    NoParseableBlock,
    #[error("malformed graph entry {0:?}")]
    MalformedEntry(String),
    #[error("label {0:?} is not in the vocabulary or synonym table")]
    UnknownLabel(String),
    #[error("invalid graph: {0}")]
    Validation(#[from] KinematicsError),
    #[error("feature grid is not in the synthetic layout (d_f = {0})")]
    NotSyntheticLayout(usize),
    #[error("endpoint unreachable: {0}")]
    Unreachable(String),
    #[error("authentication failed: {0}")]
    AuthFailed(String),
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("concurrency limit not released before the deadline")]
    Busy,
    #[error("invalid client configuration: {0}")]
    Config(String),
}

pub type Result<T, E = GraphError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphSource {
    GroundTruth,
    Stub,
    Vlm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphPrediction {
    pub graph: ConnectivityGraph,
    pub raw_response: String,
    pub source: GraphSource,
    /// Requests made; 1 for the non-network sources.
    pub attempts: u32,
}

/// Wraps a known graph.
pub fn predict_ground_truth(graph: &ConnectivityGraph) -> Result<GraphPrediction> {
    validate_graph(graph)?;
    Ok(GraphPrediction {
        graph: graph.clone(),
        raw_response: format_graph(graph),
        source: GraphSource::GroundTruth,
        attempts: 1,
    })
}
