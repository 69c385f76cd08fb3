//! URDF export of assembled objects.
//!
//! Every link frame sits at its joint's axis origin (the world origin for the
//! root) with world-aligned axes, so a child joint's `<origin>` is the offset
//! between axis origins and each visual mesh is shifted by minus its own
//! link origin. Screw joints have no URDF type; they export as revolute with
//! an extra `<screw pitch=".."/>` element.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::assemble::AssembledObject;
use super::{Result, RetrievalError};
use crate::dataset::{save_object, MeshRef, ObjectRecord};
use crate::kinematics::{JointType, PartId, Vec3};

pub const URDF_FILE: &str = "object.urdf";
pub const AOJ_FILE: &str = "object.aoj.json";
pub const MESH_DIR: &str = "meshes";

fn mesh_file(id: PartId) -> String {
    format!("{MESH_DIR}/part_{id}.obj")
}

fn vec(v: &Vec3) -> String {
    format!("{} {} {}", v.x, v.y, v.z)
}

fn link_origin(asm: &AssembledObject, id: PartId) -> Vec3 {
    match asm.parts.iter().find(|p| p.id == id) {
        Some(p) if p.parent.is_some() => p.joint.axis_origin,
        _ => Vec3::zeros(),
    }
}

pub fn urdf_string(asm: &AssembledObject, name: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0"?>"#);
    let _ = writeln!(s, r#"<robot name="{name}">"#);
    for p in &asm.parts {
        let o = link_origin(asm, p.id);
        let _ = writeln!(s, r#"  <link name="part_{}">"#, p.id);
        let _ = writeln!(s, r#"    <visual>"#);
        let _ = writeln!(s, r#"      <origin xyz="{}" rpy="0 0 0"/>"#, vec(&-o));
        let _ = writeln!(s, r#"      <geometry><mesh filename="{}"/></geometry>"#, mesh_file(p.id));
        let _ = writeln!(s, r#"    </visual>"#);
        let _ = writeln!(s, r#"  </link>"#);
    }
    for p in &asm.parts {
        let Some(parent) = p.parent else { continue };
        let j = &p.joint;
        let kind = match j.joint_type {
            JointType::Screw => "revolute",
            t => t.as_str(),
        };
        let offset = link_origin(asm, p.id) - link_origin(asm, parent);
        let _ = writeln!(s, r#"  <joint name="joint_{}" type="{kind}">"#, p.id);
        let _ = writeln!(s, r#"    <parent link="part_{parent}"/>"#);
        let _ = writeln!(s, r#"    <child link="part_{}"/>"#, p.id);
        let _ = writeln!(s, r#"    <origin xyz="{}" rpy="0 0 0"/>"#, vec(&offset));
        if j.joint_type != JointType::Fixed {
            let _ = writeln!(s, r#"    <axis xyz="{}"/>"#, vec(&j.axis_direction));
        }
        if matches!(j.joint_type, JointType::Revolute | JointType::Prismatic | JointType::Screw) {
            let _ = writeln!(
                s,
                r#"    <limit lower="{}" upper="{}" effort="1" velocity="1"/>"#,
                j.range[0], j.range[1]
            );
        }
        if j.joint_type == JointType::Screw {
            let _ = writeln!(s, r#"    <screw pitch="{}"/>"#, j.screw_pitch);
        }
        let _ = writeln!(s, r#"  </joint>"#);
    }
    s.push_str("</robot>\n");
    s
}

/// Files of an exported package, relative to its directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportManifest {
    pub name: String,
    pub urdf: String,
    pub aoj: String,
    pub meshes: Vec<String>,
}

impl ExportManifest {
    pub fn files(&self) -> impl Iterator<Item = &str> {
        [self.urdf.as_str(), self.aoj.as_str()]
            .into_iter()
            .chain(self.meshes.iter().map(String::as_str))
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| RetrievalError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

/// Writes the URDF, a sidecar AOJ and one OBJ per part into `dir`. Meshes are
/// stored in the resting world frame.
pub fn export_package(asm: &AssembledObject, name: &str, dir: &Path) -> Result<ExportManifest> {
    let mesh_dir = dir.join(MESH_DIR);
    std::fs::create_dir_all(&mesh_dir).map_err(|e| RetrievalError::Io {
        path: mesh_dir.display().to_string(),
        reason: e.to_string(),
    })?;
    let mut meshes = Vec::new();
    let mut rec = ObjectRecord::new(name, asm.abstraction.clone());
    for p in &asm.parts {
        let rel = mesh_file(p.id);
        write(&dir.join(&rel), &p.mesh.to_obj_string())?;
        rec.meshes.insert(p.id, vec![MeshRef::new(&rel)]);
        meshes.push(rel);
    }
    write(&dir.join(URDF_FILE), &urdf_string(asm, name))?;
    save_object(&rec, &dir.join(AOJ_FILE))?;
    Ok(ExportManifest {
        name: name.to_string(),
        urdf: URDF_FILE.into(),
        aoj: AOJ_FILE.into(),
        meshes,
    })
}
