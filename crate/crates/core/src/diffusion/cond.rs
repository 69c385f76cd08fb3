use rand::Rng;

use super::config::DropoutRates;
use crate::conditioning::{ForegroundMask, PatchFeatureGrid};
use crate::kinematics::{AdjacencyMatrix, MAX_PARTS};

/// Conditions for one denoiser call. `None` is the withheld (∅) condition.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConditioningBundle {
    pub features: Option<PatchFeatureGrid>,
    /// Part-level adjacency (self included), expanded to tokens by the model.
    pub graph: Option<AdjacencyMatrix>,
    pub category: Option<usize>,
    pub fg_mask: Option<ForegroundMask>,
}

impl ConditioningBundle {
    pub fn without_image(&self) -> Self {
        ConditioningBundle {
            features: None,
            fg_mask: None,
            ..self.clone()
        }
    }

    /// Part adjacency used by the graph-relation attention: the graph when
    /// present, otherwise each part related only to itself.
    pub fn part_adjacency(&self, n_parts: usize) -> Vec<Vec<bool>> {
        (0..n_parts)
            .map(|i| {
                (0..n_parts)
                    .map(|j| match &self.graph {
                        Some(a) if i < a.size && j < a.size => a.get(i, j) != 0,
                        _ => i == j,
                    })
                    .collect()
            })
            .collect()
    }
}

/// Which conditions a training sample keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DropDecision {
    pub drop_graph: bool,
    pub drop_category: bool,
    pub drop_image: bool,
}

impl DropDecision {
    pub const KEEP_ALL: DropDecision = DropDecision {
        drop_graph: false,
        drop_category: false,
        drop_image: false,
    };
}

/// Three independent coin flips.
pub fn draw_dropout<R: Rng>(rates: &DropoutRates, rng: &mut R) -> DropDecision {
    DropDecision {
        drop_graph: rng.random::<f64>() < rates.graph,
        drop_category: rng.random::<f64>() < rates.category,
        drop_image: rng.random::<f64>() < rates.image,
    }
}

pub fn apply_dropout(cond: &ConditioningBundle, d: DropDecision, n_parts: usize) -> ConditioningBundle {
    let mut out = cond.clone();
    if d.drop_graph {
        out.graph = Some(AdjacencyMatrix::self_only(MAX_PARTS, n_parts));
    }
    if d.drop_category {
        out.category = None;
    }
    if d.drop_image {
        out.features = None;
        out.fg_mask = None;
    }
    out
}
