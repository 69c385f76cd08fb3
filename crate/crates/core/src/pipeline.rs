//! Graph-conditioned generation shared by the CLI, the service and the C API.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conditioning::{ForegroundMask, PatchFeatureGrid};
use crate::dataset::{category_index, decode_attributes, DatasetError, ObjectRecord, ATTR_DIM, CATEGORIES, N_ATTRS};
use crate::diffusion::{sample, ConditioningBundle, Denoiser, DiffusionError, NoiseSchedule, Pin, SamplerConfig};
use crate::metrics::{EvalObject, MetricsError};
use crate::kinematics::{
    adjacency_matrix, validate_graph, ArticulatedAbstraction, ConnectivityGraph, KinematicsError, PartId, MAX_PARTS,
};

/// Most samples one call may ask for.
pub const MAX_SAMPLES: usize = 64;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid graph: {0}")]
    InvalidGraph(#[from] KinematicsError),
    #[error("pin references part {0}, which is not in the graph")]
    UnknownPinPart(PartId),
    #[error("feature dimension {found} does not match the model's {expected}")]
    FeatureDim { expected: usize, found: usize },
    #[error("unknown category {0:?}")]
    UnknownCategory(String),
    #[error("num_samples must be in 1..={MAX_SAMPLES}, got {0}")]
    SampleCount(usize),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Attribute rows by name, in tensor order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttrRow {
    Bbox,
    Axis,
    Range,
    Type,
    Label,
}

impl AttrRow {
    pub const ALL: [AttrRow; N_ATTRS] = [AttrRow::Bbox, AttrRow::Axis, AttrRow::Range, AttrRow::Type, AttrRow::Label];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// A pinned row addressed by part id rather than tensor index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartPin {
    pub part: PartId,
    pub row: AttrRow,
    pub values: [f64; 6],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerateParams {
    pub omega: f64,
    pub num_samples: usize,
    pub seed: u64,
    pub pins: Vec<PartPin>,
}

impl Default for GenerateParams {
    fn default() -> Self {
        GenerateParams {
            omega: SamplerConfig::default().omega,
            num_samples: 1,
            seed: 0,
            pins: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedSample {
    pub seed: u64,
    pub object: ArticulatedAbstraction,
    /// Sampled attribute rows per part in graph order, before decoding.
    pub rows: Vec<[[f64; ATTR_DIM]; N_ATTRS]>,
}

pub fn resolve_category(name: Option<&str>) -> Result<Option<usize>, PipelineError> {
    name.map(|n| category_index(n).ok_or_else(|| PipelineError::UnknownCategory(n.to_string())))
        .transpose()
}

/// Loads part meshes when every part has some; otherwise the metrics fall
/// back to the boxes.
pub fn eval_object(rec: ObjectRecord) -> Result<EvalObject, PipelineError> {
    let has_all = rec.object.parts.iter().all(|p| rec.meshes.get(&p.id).is_some_and(|m| !m.is_empty()));
    if !has_all {
        return Ok(EvalObject::abstraction_only(rec.object));
    }
    let meshes = rec
        .object
        .parts
        .iter()
        .map(|p| rec.load_part_mesh(p.id).map(|m| m.expect("checked above")))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvalObject::with_meshes(rec.object, meshes)?)
}

/// Samples `params.num_samples` objects with seeds `seed, seed + 1, ...`.
pub fn generate(
    model: &Denoiser,
    schedule: &NoiseSchedule,
    graph: &ConnectivityGraph,
    features: Option<(PatchFeatureGrid, ForegroundMask)>,
    category: Option<usize>,
    params: &GenerateParams,
) -> Result<Vec<GeneratedSample>, PipelineError> {
    validate_graph(graph)?;
    if graph.len() > MAX_PARTS {
        return Err(KinematicsError::TooManyParts {
            count: graph.len(),
            max: MAX_PARTS,
        }
        .into());
    }
    if params.num_samples == 0 || params.num_samples > MAX_SAMPLES {
        return Err(PipelineError::SampleCount(params.num_samples));
    }
    if let Some((f, _)) = &features {
        if f.d_f != model.config().d_f {
            return Err(PipelineError::FeatureDim {
                expected: model.config().d_f,
                found: f.d_f,
            });
        }
    }
    let pins = params
        .pins
        .iter()
        .map(|p| {
            Ok(Pin {
                part: graph.index_of(p.part).ok_or(PipelineError::UnknownPinPart(p.part))?,
                row: p.row.index(),
                values: p.values,
            })
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    let (features, fg_mask) = match features {
        Some((f, m)) => (Some(f), Some(m)),
        None => (None, None),
    };
    let cond = ConditioningBundle {
        features,
        graph: Some(adjacency_matrix(graph, MAX_PARTS)?),
        category,
        fg_mask,
    };
    (0..params.num_samples as u64)
        .map(|i| {
            let seed = params.seed.wrapping_add(i);
            let cfg = SamplerConfig {
                omega: params.omega,
                steps: 0,
                seed,
            };
            let x = sample(model, &cond, &cfg, schedule, &pins)?;
            let mut object = decode_attributes(&x, graph)?;
            // the requested graph is authoritative for labels
            for (part, (_, label)) in object.parts.iter_mut().zip(&graph.nodes) {
                part.label = *label;
            }
            object.category = category.map(|c| CATEGORIES[c].to_string());
            let rows = (0..graph.len())
                .map(|p| std::array::from_fn(|r| x.row(p, r).try_into().expect("row width")))
                .collect();
            Ok(GeneratedSample { seed, object, rows })
        })
        .collect()
}
