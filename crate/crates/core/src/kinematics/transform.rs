use std::collections::BTreeMap;

use nalgebra::{Matrix3, Matrix4, Rotation3, Unit};
use serde::{Deserialize, Serialize};

use super::{
    validate_graph, Aabb, ArticulatedAbstraction, Joint, JointType, KinematicsError, PartId,
    Result, Vec3,
};

/// Rotation followed by translation: `p -> R p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn translation(t: Vec3) -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    /// Rotation by `angle` about the line through `origin` along `direction`.
    pub fn rotation_about(origin: Vec3, direction: Vec3, angle: f64) -> Self {
        let r = Rotation3::from_axis_angle(&Unit::new_normalize(direction), angle).into_inner();
        RigidTransform {
            rotation: r,
            translation: origin - r * origin,
        }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn is_finite(&self) -> bool {
        self.rotation.iter().chain(self.translation.iter()).all(|v| v.is_finite())
    }
}

pub fn joint_transform(j: &Joint, q: f64) -> Result<RigidTransform> {
    if !(0.0..=1.0).contains(&q) {
        return Err(KinematicsError::InvalidQ(q));
    }
    let d = j.displacement(q);
    Ok(match j.joint_type {
        JointType::Fixed => RigidTransform::identity(),
        JointType::Prismatic => RigidTransform::translation(j.axis_direction * d),
        JointType::Revolute | JointType::Continuous => {
            RigidTransform::rotation_about(j.axis_origin, j.axis_direction, d)
        }
        JointType::Screw => {
            let rot = RigidTransform::rotation_about(j.axis_origin, j.axis_direction, d);
            RigidTransform::translation(j.axis_direction * (d * j.screw_pitch)).compose(&rot)
        }
    })
}

/// Normalized joint coordinates per part. Missing entries read as 0 (rest).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ArticulationState {
    pub q: BTreeMap<PartId, f64>,
}

impl ArticulationState {
    pub fn rest() -> Self {
        Self::default()
    }

    /// Same coordinate for every part of `obj`.
    pub fn uniform(obj: &ArticulatedAbstraction, q: f64) -> Self {
        ArticulationState {
            q: obj.parts.iter().map(|p| (p.id, q)).collect(),
        }
    }

    pub fn get(&self, id: PartId) -> f64 {
        self.q.get(&id).copied().unwrap_or(0.0)
    }
}

/// World pose of every part; the root is fixed at identity.
pub fn pose_parts(
    obj: &ArticulatedAbstraction,
    s: &ArticulationState,
) -> Result<BTreeMap<PartId, RigidTransform>> {
    let g = obj.graph();
    validate_graph(&g)?;
    let mut poses = BTreeMap::new();
    // Parents before children: breadth-first from the root.
    let mut queue = std::collections::VecDeque::from([g.root().expect("validated")]);
    poses.insert(queue[0], RigidTransform::identity());
    while let Some(id) = queue.pop_front() {
        let parent_pose = poses[&id];
        for c in g.children(id) {
            let part = obj.part(c).expect("graph derived from parts");
            let local = joint_transform(&part.joint, s.get(c))?;
            poses.insert(c, parent_pose.compose(&local));
            queue.push_back(c);
        }
    }
    Ok(poses)
}

/// `k` states with every joint at `i / (k - 1)`.
pub fn sample_states(obj: &ArticulatedAbstraction, k: usize) -> Result<Vec<ArticulationState>> {
    if k < 2 {
        return Err(KinematicsError::InvalidK(k));
    }
    Ok((0..k)
        .map(|i| ArticulationState::uniform(obj, i as f64 / (k - 1) as f64))
        .collect())
}

pub fn box_corners_posed(bbox: &Aabb, t: &RigidTransform) -> [Vec3; 8] {
    bbox.corners().map(|c| t.apply(&c))
}
