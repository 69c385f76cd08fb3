use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::boxes::{d_cdist_pair, d_giou_pair, intersection_volume, OrientedBox};
use super::chamfer::{chamfer_points, DEFAULT_POINTS};
use super::hungarian::hungarian;
use super::{MetricsError, Result};
use crate::kinematics::{
    pose_parts, transform_object, union_aabb, ArticulatedAbstraction, ArticulationState, PartId,
    RigidTransform, Similarity, Vec3,
};
use crate::mesh::TriMesh;

/// An object under evaluation. Meshes, when present, are parallel to
/// `abstraction.parts` and expressed in the resting world frame.
#[derive(Debug, Clone)]
pub struct EvalObject {
    pub abstraction: ArticulatedAbstraction,
    pub meshes: Option<Vec<TriMesh>>,
}

impl EvalObject {
    pub fn abstraction_only(abstraction: ArticulatedAbstraction) -> Self {
        EvalObject {
            abstraction,
            meshes: None,
        }
    }

    pub fn with_meshes(abstraction: ArticulatedAbstraction, meshes: Vec<TriMesh>) -> Result<Self> {
        if meshes.len() != abstraction.parts.len() {
            return Err(MetricsError::MeshCountMismatch {
                parts: abstraction.parts.len(),
                meshes: meshes.len(),
            });
        }
        Ok(EvalObject {
            abstraction,
            meshes: Some(meshes),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceKind {
    Giou,
    Cdist,
    Cd,
}

impl DistanceKind {
    pub const ALL: [DistanceKind; 3] = [DistanceKind::Giou, DistanceKind::Cdist, DistanceKind::Cd];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateMode {
    /// Resting state only.
    Rs,
    /// `k_states` states with every joint at `i / (k - 1)`.
    As,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub k_states: usize,
    pub scale_normalize: bool,
    /// Re-run the matching in every state instead of reusing the resting one.
    pub rematch_per_state: bool,
    pub n_points: usize,
    pub seed: u64,
    pub squared_chamfer: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            k_states: 5,
            scale_normalize: true,
            rematch_per_state: true,
            n_points: DEFAULT_POINTS,
            seed: 0,
            squared_chamfer: true,
        }
    }
}

/// Part correspondences in both directions, as part ids with their centroid
/// cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub forward: Vec<(PartId, PartId, f64)>,
    pub backward: Vec<(PartId, PartId, f64)>,
}

/// For each point in `from`, the index of its partner in `to`. Rows left
/// unassigned by the Hungarian solve (when `from` is larger) fall back to
/// their nearest centroid.
fn match_direction(from: &[Vec3], to: &[Vec3]) -> Result<Vec<usize>> {
    let cost: Vec<Vec<f64>> = from
        .iter()
        .map(|a| to.iter().map(|b| (a - b).norm()).collect())
        .collect();
    let assigned = hungarian(&cost)?.row_to_col(from.len());
    Ok(assigned
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            c.unwrap_or_else(|| {
                (0..to.len())
                    .min_by(|&x, &y| cost[i][x].total_cmp(&cost[i][y]))
                    .expect("nonempty")
            })
        })
        .collect())
}

fn centroids(boxes: &[OrientedBox]) -> Vec<Vec3> {
    boxes.iter().map(|b| b.center).collect()
}

/// Matching on centroid distance at the given state, in both directions.
pub fn match_parts(
    o1: &ArticulatedAbstraction,
    o2: &ArticulatedAbstraction,
    state: &ArticulationState,
) -> Result<MatchResult> {
    let (b1, b2) = (posed_boxes(o1, state)?, posed_boxes(o2, state)?);
    let (c1, c2) = (centroids(&b1), centroids(&b2));
    let tag = |from: &ArticulatedAbstraction, to: &ArticulatedAbstraction, cf: &[Vec3], ct: &[Vec3]| {
        match_direction(cf, ct).map(|m| {
            m.into_iter()
                .enumerate()
                .map(|(i, j)| (from.parts[i].id, to.parts[j].id, (cf[i] - ct[j]).norm()))
                .collect()
        })
    };
    Ok(MatchResult {
        forward: tag(o1, o2, &c1, &c2)?,
        backward: tag(o2, o1, &c2, &c1)?,
    })
}

fn posed_boxes(obj: &ArticulatedAbstraction, state: &ArticulationState) -> Result<Vec<OrientedBox>> {
    let poses = pose_parts(obj, state)?;
    Ok(obj
        .parts
        .iter()
        .map(|p| OrientedBox::posed(&p.bbox, &poses[&p.id]))
        .collect())
}

fn part_poses(obj: &ArticulatedAbstraction, state: &ArticulationState) -> Result<Vec<RigidTransform>> {
    let poses = pose_parts(obj, state)?;
    Ok(obj.parts.iter().map(|p| poses[&p.id]).collect())
}

/// One side of the comparison with everything that does not depend on the
/// state precomputed.
struct Prepared {
    obj: ArticulatedAbstraction,
    /// Resting-frame surface samples per part.
    samples: Option<Vec<Vec<Vec3>>>,
}

fn prepare(o: &EvalObject, scale: f64, kind: DistanceKind, cfg: &EvalConfig) -> Result<Prepared> {
    if o.abstraction.parts.is_empty() {
        return Err(MetricsError::EmptyObject);
    }
    let sim = Similarity {
        scale,
        translation: Vec3::zeros(),
    };
    let obj = if scale == 1.0 {
        o.abstraction.clone()
    } else {
        transform_object(&o.abstraction, &sim)
    };
    let samples = if kind == DistanceKind::Cd {
        let meshes = o.meshes.as_ref().ok_or(MetricsError::MissingMeshes)?;
        let pts = meshes
            .par_iter()
            .map(|m| {
                m.sample_surface(cfg.n_points, cfg.seed)
                    .map(|ps| ps.iter().map(|p| sim.apply(p)).collect::<Vec<_>>())
                    .map_err(|_| MetricsError::EmptyMesh)
            })
            .collect::<Result<Vec<_>>>()?;
        Some(pts)
    } else {
        None
    };
    Ok(Prepared { obj, samples })
}

fn longest_edge(obj: &ArticulatedAbstraction) -> Result<f64> {
    let b = union_aabb(obj).ok_or(MetricsError::EmptyObject)?;
    let e = b.extent().max();
    if e <= 1e-12 {
        return Err(MetricsError::DegenerateScale);
    }
    Ok(e)
}

/// The object distance: matched pairwise part distances averaged per
/// direction, the two directions averaged, then averaged over the states.
/// `o2` is the reference whose scale `o1` is normalized to.
pub fn eval_d(
    o1: &EvalObject,
    o2: &EvalObject,
    kind: DistanceKind,
    mode: StateMode,
    cfg: &EvalConfig,
) -> Result<f64> {
    let scale = if cfg.scale_normalize {
        longest_edge(&o2.abstraction)? / longest_edge(&o1.abstraction)?
    } else {
        1.0
    };
    let p1 = prepare(o1, scale, kind, cfg)?;
    let p2 = prepare(o2, 1.0, kind, cfg)?;

    let qs: Vec<f64> = match mode {
        StateMode::Rs => vec![0.0],
        StateMode::As => {
            if cfg.k_states < 2 {
                return Err(MetricsError::InvalidStateCount(cfg.k_states));
            }
            (0..cfg.k_states)
                .map(|i| i as f64 / (cfg.k_states - 1) as f64)
                .collect()
        }
    };

    let rest_matching = if cfg.rematch_per_state {
        None
    } else {
        let rest = ArticulationState::rest();
        let (c1, c2) = (
            centroids(&posed_boxes(&p1.obj, &rest)?),
            centroids(&posed_boxes(&p2.obj, &rest)?),
        );
        Some((match_direction(&c1, &c2)?, match_direction(&c2, &c1)?))
    };

    let per_state = qs
        .par_iter()
        .map(|&q| {
            let s1 = ArticulationState::uniform(&p1.obj, q);
            let s2 = ArticulationState::uniform(&p2.obj, q);
            let (b1, b2) = (posed_boxes(&p1.obj, &s1)?, posed_boxes(&p2.obj, &s2)?);
            let (fwd, bwd) = match &rest_matching {
                Some(m) => m.clone(),
                None => {
                    let (c1, c2) = (centroids(&b1), centroids(&b2));
                    (match_direction(&c1, &c2)?, match_direction(&c2, &c1)?)
                }
            };
            let pts = match (&p1.samples, &p2.samples) {
                (Some(a), Some(b)) => {
                    let (t1, t2) = (part_poses(&p1.obj, &s1)?, part_poses(&p2.obj, &s2)?);
                    let pose = |ps: &[Vec<Vec3>], ts: &[RigidTransform]| -> Vec<Vec<Vec3>> {
                        ps.iter()
                            .zip(ts)
                            .map(|(p, t)| p.iter().map(|x| t.apply(x)).collect())
                            .collect()
                    };
                    Some((pose(a, &t1), pose(b, &t2)))
                }
                _ => None,
            };
            let d = |i: usize, j: usize| -> f64 {
                match kind {
                    DistanceKind::Giou => d_giou_pair(&b1[i], &b2[j]),
                    DistanceKind::Cdist => d_cdist_pair(&b1[i], &b2[j]),
                    DistanceKind::Cd => {
                        let (a, b) = pts.as_ref().expect("prepared with samples");
                        chamfer_points(&a[i], &b[j], cfg.squared_chamfer)
                    }
                }
            };
            let forward: f64 = fwd.iter().enumerate().map(|(i, &j)| d(i, j)).sum::<f64>() / fwd.len() as f64;
            let backward: f64 = bwd.iter().enumerate().map(|(j, &i)| d(i, j)).sum::<f64>() / bwd.len() as f64;
            Ok(0.5 * (forward + backward))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(per_state.iter().sum::<f64>() / per_state.len() as f64)
}

/// Average overlap ratio over sibling pairs at the resting state.
pub fn aor(obj: &ArticulatedAbstraction) -> Result<f64> {
    aor_at(obj, &ArticulationState::rest())
}

pub fn aor_at(obj: &ArticulatedAbstraction, state: &ArticulationState) -> Result<f64> {
    let boxes = posed_boxes(obj, state)?;
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..obj.parts.len() {
        for j in i + 1..obj.parts.len() {
            let (a, b) = (&obj.parts[i], &obj.parts[j]);
            if a.parent.is_none() || a.parent != b.parent {
                continue;
            }
            let inter = intersection_volume(&boxes[i], &boxes[j]);
            let denom = boxes[i].volume().min(boxes[j].volume());
            total += (inter / denom).clamp(0.0, 1.0);
            count += 1;
        }
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}
