//! AOJ object files: UTF-8 JSON describing one articulated object.
//!
//! ```json
//! {"id": "cab-1", "category": "StorageFurniture",
//!  "parts": [{"id": 0, "label": "base",
//!             "bbox": {"center": [0,0,0], "halfextent": [1,1,1]},
//!             "joint": {"type": "fixed", "origin": [0,0,0], "direction": [0,0,1], "range": [0,0]},
//!             "parent": null, "mesh": "meshes/base.obj"}]}
//! ```
//!
//! `mesh` is either a path relative to the object file or a list of
//! `{"path", "transform"?: {"linear": [9, column-major], "translation": [3]}}`
//! entries whose affine map takes file coordinates into the object frame.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::{DatasetError, Result};
use crate::kinematics::{
    normalize_with_transform, Aabb, ArticulatedAbstraction, Joint, JointType, PartAbstraction,
    PartId, SemanticLabel, Similarity, Vec3, DEFAULT_SCREW_PITCH,
};
use crate::mesh::TriMesh;

/// `p -> linear * p + translation`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshAffine {
    pub linear: Matrix3<f64>,
    pub translation: Vec3,
}

impl Default for MeshAffine {
    fn default() -> Self {
        MeshAffine {
            linear: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }
}

impl MeshAffine {
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.linear * p + self.translation
    }

    /// This map followed by `p -> m p + t`.
    pub fn then(&self, m: &Matrix3<f64>, t: &Vec3) -> MeshAffine {
        MeshAffine {
            linear: m * self.linear,
            translation: m * self.translation + t,
        }
    }

    pub fn then_similarity(&self, s: &Similarity) -> MeshAffine {
        self.then(&(Matrix3::identity() * s.scale), &s.translation)
    }

    pub fn is_identity(&self) -> bool {
        *self == MeshAffine::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshRef {
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "MeshAffine::is_identity")]
    pub transform: MeshAffine,
}

impl MeshRef {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        MeshRef {
            path: path.into(),
            transform: MeshAffine::default(),
        }
    }

    pub fn load(&self) -> Result<TriMesh> {
        let raw = TriMesh::load(&self.path)?;
        Ok(TriMesh::new(
            raw.vertices.iter().map(|v| self.transform.apply(v)).collect(),
            raw.faces,
        ))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SourceMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_id: Option<String>,
}

/// One object: its abstraction, per-part mesh references and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectRecord {
    pub id: String,
    pub object: ArticulatedAbstraction,
    /// Absolute mesh paths with their maps into the object frame.
    pub meshes: BTreeMap<PartId, Vec<MeshRef>>,
    pub source: SourceMeta,
}

impl ObjectRecord {
    pub fn new(id: impl Into<String>, object: ArticulatedAbstraction) -> Self {
        ObjectRecord {
            id: id.into(),
            object,
            meshes: BTreeMap::new(),
            source: SourceMeta::default(),
        }
    }

    pub fn category(&self) -> Option<&str> {
        self.object.category.as_deref()
    }

    /// Applies `p -> m p + t` to geometry, joints and mesh maps.
    pub fn apply_affine(&mut self, m: &Matrix3<f64>, t: &Vec3) {
        for p in &mut self.object.parts {
            crate::kinematics::apply_affine(p, m, t);
        }
        for refs in self.meshes.values_mut() {
            for r in refs {
                r.transform = r.transform.then(m, t);
            }
        }
    }

    /// Re-centers and rescales into the canonical cube.
    pub fn renormalize(&mut self) -> Result<Similarity> {
        let (obj, s) = normalize_with_transform(&self.object)?;
        self.object = obj;
        for refs in self.meshes.values_mut() {
            for r in refs {
                r.transform = r.transform.then_similarity(&s);
            }
        }
        Ok(s)
    }

    /// All meshes of one part merged, or `None` without references.
    pub fn load_part_mesh(&self, id: PartId) -> Result<Option<TriMesh>> {
        let Some(refs) = self.meshes.get(&id).filter(|r| !r.is_empty()) else {
            return Ok(None);
        };
        let mut out = TriMesh::default();
        for r in refs {
            out.merge(&r.load()?);
        }
        Ok(Some(out))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AojBox {
    center: [f64; 3],
    halfextent: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AojJoint {
    #[serde(rename = "type")]
    joint_type: JointType,
    #[serde(default)]
    origin: [f64; 3],
    #[serde(default = "default_direction")]
    direction: [f64; 3],
    #[serde(default)]
    range: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pitch: Option<f64>,
}

fn default_direction() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum AojMesh {
    Path(PathBuf),
    List(Vec<MeshRef>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AojPart {
    id: PartId,
    label: SemanticLabel,
    bbox: AojBox,
    joint: AojJoint,
    parent: Option<PartId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mesh: Option<AojMesh>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AojFile {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source: Option<SourceMeta>,
    parts: Vec<AojPart>,
}

fn to_v(a: [f64; 3]) -> Vec3 {
    Vec3::from(a)
}

fn from_v(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

/// Parses AOJ text without validating or normalizing. Relative mesh paths
/// resolve against `base_dir`.
pub fn parse_object(text: &str, base_dir: &Path) -> Result<ObjectRecord> {
    let file: AojFile = serde_json::from_str(text).map_err(|e| DatasetError::Parse(e.to_string()))?;
    let mut meshes = BTreeMap::new();
    let mut parts = Vec::with_capacity(file.parts.len());
    for p in file.parts {
        let joint = Joint {
            joint_type: p.joint.joint_type,
            axis_origin: to_v(p.joint.origin),
            axis_direction: to_v(p.joint.direction),
            range: p.joint.range,
            screw_pitch: p.joint.pitch.unwrap_or(DEFAULT_SCREW_PITCH),
        };
        let joint = match joint.joint_type {
            JointType::Continuous => joint.canonical(),
            _ => joint,
        };
        parts.push(PartAbstraction {
            id: p.id,
            label: p.label,
            bbox: Aabb::from_center_half(to_v(p.bbox.center), to_v(p.bbox.halfextent)),
            joint,
            parent: p.parent,
        });
        let refs = match p.mesh {
            None => continue,
            Some(AojMesh::Path(path)) => vec![MeshRef::new(path)],
            Some(AojMesh::List(list)) => list,
        };
        let refs = refs
            .into_iter()
            .map(|mut r| {
                if r.path.is_relative() {
                    r.path = base_dir.join(&r.path);
                }
                r
            })
            .collect();
        meshes.insert(p.id, refs);
    }
    let mut object = ArticulatedAbstraction::new(parts);
    object.category = file.category;
    Ok(ObjectRecord {
        id: file.id,
        object,
        meshes,
        source: file.source.unwrap_or_default(),
    })
}

/// Reads, validates and normalizes an object file.
pub fn load_object(path: &Path) -> Result<ObjectRecord> {
    let text = std::fs::read_to_string(path).map_err(|e| DatasetError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut rec = parse_object(&text, base)?;
    rec.object.validate()?;
    rec.renormalize()?;
    Ok(rec)
}

pub fn object_to_json(rec: &ObjectRecord) -> String {
    let parts = rec
        .object
        .parts
        .iter()
        .map(|p| AojPart {
            id: p.id,
            label: p.label,
            bbox: AojBox {
                center: from_v(&p.bbox.center()),
                halfextent: from_v(&p.bbox.half_extent()),
            },
            joint: AojJoint {
                joint_type: p.joint.joint_type,
                origin: from_v(&p.joint.axis_origin),
                direction: from_v(&p.joint.axis_direction),
                range: p.joint.range,
                pitch: Some(p.joint.screw_pitch),
            },
            parent: p.parent,
            mesh: rec.meshes.get(&p.id).map(|refs| match refs.as_slice() {
                [single] if single.transform.is_identity() => AojMesh::Path(single.path.clone()),
                _ => AojMesh::List(refs.clone()),
            }),
        })
        .collect();
    let file = AojFile {
        id: rec.id.clone(),
        category: rec.object.category.clone(),
        source: (rec.source != SourceMeta::default()).then(|| rec.source.clone()),
        parts,
    };
    serde_json::to_string_pretty(&file).expect("serializable")
}

pub fn save_object(rec: &ObjectRecord, path: &Path) -> Result<()> {
    std::fs::write(path, object_to_json(rec)).map_err(|e| DatasetError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}
