use std::cmp::Ordering;
use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::library::PartLibrary;
use super::{Result, RetrievalError};
use crate::dataset::ObjectRecord;
use crate::kinematics::{Aabb, ArticulatedAbstraction, Joint, PartId, SemanticLabel, Vec3};
use crate::mesh::TriMesh;
use crate::metrics::{eval_d, DistanceKind, EvalConfig, EvalObject, StateMode};

/// Extents below this count as zero when fitting.
const MIN_MESH_EXTENT: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    /// Metric settings for candidate scoring (`k_states` drives the AS score).
    pub eval: EvalConfig,
    /// All generated parts with one label share the first matched mesh.
    pub reuse_per_label: bool,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            eval: EvalConfig::default(),
            reuse_per_label: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: String,
    pub as_cdist: f64,
    pub rs_cdist: f64,
}

fn score(gen: &ArticulatedAbstraction, entry: &ObjectRecord, cfg: &EvalConfig) -> Result<Candidate> {
    let a = EvalObject::abstraction_only(gen.clone());
    let b = EvalObject::abstraction_only(entry.object.clone());
    Ok(Candidate {
        id: entry.id.clone(),
        as_cdist: eval_d(&a, &b, DistanceKind::Cdist, StateMode::As, cfg)?,
        rs_cdist: eval_d(&a, &b, DistanceKind::Cdist, StateMode::Rs, cfg)?,
    })
}

fn rank(a: &Candidate, b: &Candidate) -> Ordering {
    a.as_cdist
        .total_cmp(&b.as_cdist)
        .then(a.rs_cdist.total_cmp(&b.rs_cdist))
        .then_with(|| a.id.cmp(&b.id))
}

/// Every library entry scored against `gen`, best first.
pub fn rank_candidates(gen: &ArticulatedAbstraction, lib: &PartLibrary, cfg: &EvalConfig) -> Result<Vec<Candidate>> {
    let mut all = lib
        .entries()
        .par_iter()
        .map(|e| score(gen, e, cfg))
        .collect::<Result<Vec<_>>>()?;
    all.sort_by(rank);
    Ok(all)
}

/// The entry with the lowest AS-d_cDist to `gen`; ties go to the lower
/// RS-d_cDist, then the lexicographically smaller id.
pub fn select_candidate<'a>(
    gen: &ArticulatedAbstraction,
    lib: &'a PartLibrary,
    cfg: &EvalConfig,
) -> Result<(&'a ObjectRecord, Candidate)> {
    if lib.is_empty() {
        return Err(RetrievalError::EmptyLibrary);
    }
    let best = rank_candidates(gen, lib, cfg)?.swap_remove(0);
    let rec = lib.get(&best.id).expect("ranked ids come from the library");
    Ok((rec, best))
}

/// Where a part's geometry came from.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeshSource {
    Library { object: String, part: PartId },
    Default { label: SemanticLabel },
}

impl MeshSource {
    /// Stable identifier of the referenced mesh.
    pub fn mesh_id(&self) -> String {
        match self {
            MeshSource::Library { object, part } => format!("{object}/{part}"),
            MeshSource::Default { label } => format!("default/{label}"),
        }
    }
}

/// Picks a mesh source for every generated part: the nearest-centroid
/// candidate part with the same label, or the library default for labels
/// the candidate lacks. Candidate parts without mesh files also fall back.
pub fn match_part_meshes(
    gen: &ArticulatedAbstraction,
    candidate: &ObjectRecord,
    lib: &PartLibrary,
    reuse_per_label: bool,
) -> Result<BTreeMap<PartId, MeshSource>> {
    let mut first: BTreeMap<SemanticLabel, MeshSource> = BTreeMap::new();
    let mut out = BTreeMap::new();
    for p in &gen.parts {
        if reuse_per_label {
            if let Some(src) = first.get(&p.label) {
                out.insert(p.id, src.clone());
                continue;
            }
        }
        let c = p.bbox.center();
        let nearest = candidate
            .object
            .parts
            .iter()
            .filter(|q| q.label == p.label)
            .min_by(|a, b| {
                (a.bbox.center() - c)
                    .norm()
                    .total_cmp(&(b.bbox.center() - c).norm())
                    .then(a.id.cmp(&b.id))
            });
        let src = match nearest {
            Some(q) if candidate.meshes.get(&q.id).is_some_and(|r| !r.is_empty()) => MeshSource::Library {
                object: candidate.id.clone(),
                part: q.id,
            },
            _ => {
                if lib.default_for(p.label).is_none() {
                    return Err(RetrievalError::NoDefaultMesh(p.label));
                }
                MeshSource::Default { label: p.label }
            }
        };
        first.entry(p.label).or_insert_with(|| src.clone());
        out.insert(p.id, src);
    }
    Ok(out)
}

/// `v -> scale ⊙ v + translation`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitTransform {
    pub scale: Vec3,
    pub translation: Vec3,
}

impl FitTransform {
    pub fn apply(&self, mesh: &TriMesh) -> TriMesh {
        mesh.scaled(&self.scale, &self.translation)
    }
}

/// Anisotropic scale and translation taking the mesh AABB onto `bbox`.
pub fn fit_mesh_to_box(mesh: &TriMesh, bbox: &Aabb) -> Result<FitTransform> {
    let src = mesh.aabb().ok_or(RetrievalError::DegenerateMesh)?;
    let e = src.extent();
    if e.iter().any(|v| !(*v > MIN_MESH_EXTENT)) {
        return Err(RetrievalError::DegenerateMesh);
    }
    let scale = bbox.extent().component_div(&e);
    Ok(FitTransform {
        scale,
        translation: bbox.center() - scale.component_mul(&src.center()),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssembledPart {
    pub id: PartId,
    pub label: SemanticLabel,
    pub parent: Option<PartId>,
    /// Fitted geometry in the resting world frame.
    pub mesh: TriMesh,
    pub fit: FitTransform,
    pub joint: Joint,
    pub source: MeshSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssembledObject {
    pub abstraction: ArticulatedAbstraction,
    pub candidate: Candidate,
    pub parts: Vec<AssembledPart>,
}

impl AssembledObject {
    pub fn meshes(&self) -> Vec<TriMesh> {
        self.parts.iter().map(|p| p.mesh.clone()).collect()
    }
}

fn source_mesh(src: &MeshSource, candidate: &ObjectRecord, lib: &PartLibrary) -> Result<TriMesh> {
    match src {
        MeshSource::Library { part, .. } => Ok(candidate
            .load_part_mesh(*part)?
            .expect("matched parts have mesh references")),
        MeshSource::Default { label } => lib.default_for(*label).cloned().ok_or(RetrievalError::NoDefaultMesh(*label)),
    }
}

/// Candidate selection, mesh matching and box fitting.
pub fn assemble(gen: &ArticulatedAbstraction, lib: &PartLibrary, cfg: &RetrievalConfig) -> Result<AssembledObject> {
    gen.validate()?;
    let (candidate, score) = select_candidate(gen, lib, &cfg.eval)?;
    let sources = match_part_meshes(gen, candidate, lib, cfg.reuse_per_label)?;
    let mut loaded: BTreeMap<&MeshSource, TriMesh> = BTreeMap::new();
    for src in sources.values() {
        if !loaded.contains_key(src) {
            loaded.insert(src, source_mesh(src, candidate, lib)?);
        }
    }
    let parts = gen
        .parts
        .iter()
        .map(|p| {
            let src = &sources[&p.id];
            let raw = &loaded[src];
            let fit = fit_mesh_to_box(raw, &p.bbox)?;
            Ok(AssembledPart {
                id: p.id,
                label: p.label,
                parent: p.parent,
                mesh: fit.apply(raw),
                fit,
                joint: p.joint.clone(),
                source: src.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AssembledObject {
        abstraction: gen.clone(),
        candidate: score,
        parts,
    })
}
