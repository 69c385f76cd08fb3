use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::{Result, RetrievalError};
use crate::dataset::{load_object, MeshRef, ObjectRecord};
use crate::kinematics::SemanticLabel;
use crate::mesh::TriMesh;

/// Built-in stand-in mesh for a label: boxes for base, door, drawer and tray,
/// a torus for handles and a cylinder for knobs.
pub fn default_mesh(label: SemanticLabel) -> TriMesh {
    match label {
        SemanticLabel::Handle => TriMesh::torus(24, 12),
        SemanticLabel::Knob => TriMesh::cylinder(24),
        _ => TriMesh::unit_box(),
    }
}

/// Candidate objects with part meshes, indexed by category, plus one
/// fallback mesh per label.
#[derive(Debug, Clone)]
pub struct PartLibrary {
    pub name: String,
    entries: Vec<ObjectRecord>,
    by_category: BTreeMap<String, Vec<usize>>,
    defaults: BTreeMap<SemanticLabel, TriMesh>,
}

impl PartLibrary {
    /// Validates every record; the built-in meshes are the defaults.
    pub fn new(name: impl Into<String>, entries: Vec<ObjectRecord>) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for e in &entries {
            e.object.validate().map_err(|err| RetrievalError::InvalidEntry {
                id: e.id.clone(),
                reason: err.to_string(),
            })?;
            if !seen.insert(e.id.clone()) {
                return Err(RetrievalError::InvalidEntry {
                    id: e.id.clone(),
                    reason: "duplicate id".into(),
                });
            }
        }
        let mut by_category: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, e) in entries.iter().enumerate() {
            by_category.entry(e.category().unwrap_or("").to_string()).or_default().push(i);
        }
        let defaults = SemanticLabel::ALL.iter().map(|l| (*l, default_mesh(*l))).collect();
        Ok(PartLibrary {
            name: name.into(),
            entries,
            by_category,
            defaults,
        })
    }

    /// Loads every `*.json` / `*.aoj` object file in `dir` (sorted by name).
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let rd = std::fs::read_dir(dir).map_err(|e| RetrievalError::Io {
            path: dir.display().to_string(),
            reason: e.to_string(),
        })?;
        let mut files: Vec<PathBuf> = rd
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("json" | "aoj")))
            .collect();
        files.sort();
        let entries = files.iter().map(|p| load_object(p)).collect::<Result<Vec<_>, _>>()?;
        let name = dir.file_name().and_then(|n| n.to_str()).unwrap_or("library").to_string();
        Self::new(name, entries)
    }

    pub fn entries(&self) -> &[ObjectRecord] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ObjectRecord> {
        self.entries.iter().find(|e| e.id == id)
    }

    /// Entries of one category; uncategorized entries sit under `""`.
    pub fn in_category<'a>(&'a self, category: &str) -> impl Iterator<Item = &'a ObjectRecord> + 'a {
        self.by_category
            .get(category)
            .into_iter()
            .flatten()
            .map(|&i| &self.entries[i])
    }

    pub fn categories(&self) -> impl Iterator<Item = &str> {
        self.by_category.keys().map(String::as_str)
    }

    pub fn default_for(&self, label: SemanticLabel) -> Option<&TriMesh> {
        self.defaults.get(&label)
    }

    pub fn set_default(&mut self, label: SemanticLabel, mesh: TriMesh) {
        self.defaults.insert(label, mesh);
    }

    pub fn remove_default(&mut self, label: SemanticLabel) {
        self.defaults.remove(&label);
    }
}

/// Gives a mesh-less record real geometry: each part's default mesh fitted
/// into its box, written to `dir/<id>/part_<pid>.obj` and referenced by absolute path.
pub fn write_box_meshes(rec: &mut ObjectRecord, dir: &Path) -> Result<()> {
    let out = dir.join(&rec.id);
    let io = |e: std::io::Error| RetrievalError::Io {
        path: out.display().to_string(),
        reason: e.to_string(),
    };
    std::fs::create_dir_all(&out).map_err(io)?;
    let out = std::path::absolute(&out).map_err(io)?;
    for p in &rec.object.parts {
        let mesh = default_mesh(p.label);
        let fit = super::fit_mesh_to_box(&mesh, &p.bbox)?;
        let path = out.join(format!("part_{}.obj", p.id));
        std::fs::write(&path, fit.apply(&mesh).to_obj_string()).map_err(|e| RetrievalError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        rec.meshes.insert(p.id, vec![MeshRef::new(path)]);
    }
    Ok(())
}
