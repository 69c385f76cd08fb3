use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::{Aabb, ArticulatedAbstraction, JointType, KinematicsError, PartAbstraction, Result, Vec3};

/// Uniform scale then translation: `p -> scale * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Similarity {
    pub scale: f64,
    pub translation: Vec3,
}

impl Default for Similarity {
    fn default() -> Self {
        Similarity {
            scale: 1.0,
            translation: Vec3::zeros(),
        }
    }
}

impl Similarity {
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        p * self.scale + self.translation
    }

    /// `self` after `first`.
    pub fn after(&self, first: &Similarity) -> Similarity {
        Similarity {
            scale: self.scale * first.scale,
            translation: first.translation * self.scale + self.translation,
        }
    }
}

/// Resting-state union of all part boxes.
pub fn union_aabb(obj: &ArticulatedAbstraction) -> Option<Aabb> {
    obj.parts
        .iter()
        .map(|p| p.bbox)
        .reduce(|a, b| a.union(&b))
}

/// Maps an object through `p -> m p + t`. Boxes become the AABB of their
/// mapped corners, which is exact for axis permutations, flips and
/// per-axis scaling. Axis directions are re-normalized and linear joint
/// quantities stretch with the direction.
pub fn apply_affine(part: &mut PartAbstraction, m: &Matrix3<f64>, t: &Vec3) {
    let corners = part.bbox.corners().map(|c| m * c + t);
    part.bbox = Aabb::from_points(corners.iter()).expect("8 corners");
    let j = &mut part.joint;
    j.axis_origin = m * j.axis_origin + t;
    let mapped = m * j.axis_direction;
    let stretch = mapped.norm();
    if stretch > 0.0 {
        j.axis_direction = mapped / stretch;
    }
    if j.joint_type == JointType::Prismatic {
        j.range = [j.range[0] * stretch, j.range[1] * stretch];
    }
    j.screw_pitch *= stretch;
}

fn apply_similarity(part: &mut PartAbstraction, s: &Similarity) {
    part.bbox = Aabb::new(s.apply(&part.bbox.min), s.apply(&part.bbox.max));
    let j = &mut part.joint;
    j.axis_origin = s.apply(&j.axis_origin);
    if j.joint_type == JointType::Prismatic {
        j.range = [j.range[0] * s.scale, j.range[1] * s.scale];
    }
    j.screw_pitch *= s.scale;
}

/// Centers the resting union box at the origin and scales its longest edge to 2.
/// Returns the applied map so meshes can follow.
pub fn normalize_with_transform(
    obj: &ArticulatedAbstraction,
) -> Result<(ArticulatedAbstraction, Similarity)> {
    let u = union_aabb(obj).ok_or(KinematicsError::DegenerateExtent)?;
    let longest = u.extent().max();
    if !(longest > 1e-12) || !longest.is_finite() {
        return Err(KinematicsError::DegenerateExtent);
    }
    let scale = 2.0 / longest;
    let s = Similarity {
        scale,
        translation: -u.center() * scale,
    };
    let mut out = obj.clone();
    for p in &mut out.parts {
        apply_similarity(p, &s);
    }
    Ok((out, s))
}

pub fn normalize_object(obj: &ArticulatedAbstraction) -> Result<ArticulatedAbstraction> {
    normalize_with_transform(obj).map(|(o, _)| o)
}

pub fn transform_object(obj: &ArticulatedAbstraction, s: &Similarity) -> ArticulatedAbstraction {
    let mut out = obj.clone();
    for p in &mut out.parts {
        apply_similarity(p, s);
    }
    out
}
