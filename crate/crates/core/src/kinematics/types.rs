use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{ConnectivityGraph, GraphNode, KinematicsError, Result};

pub type Vec3 = nalgebra::Vector3<f64>;
pub type PartId = u32;

/// Maximum number of parts in one object; tensors are padded to this size.
pub const MAX_PARTS: usize = 32;

/// Screw coupling used when the data does not provide one (world units per radian).
pub const DEFAULT_SCREW_PITCH: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointType {
    Fixed,
    Revolute,
    Prismatic,
    Continuous,
    Screw,
}

impl JointType {
    pub const ALL: [JointType; 5] = [
        JointType::Fixed,
        JointType::Revolute,
        JointType::Prismatic,
        JointType::Continuous,
        JointType::Screw,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            JointType::Fixed => "fixed",
            JointType::Revolute => "revolute",
            JointType::Prismatic => "prismatic",
            JointType::Continuous => "continuous",
            JointType::Screw => "screw",
        }
    }

    /// Whether the range is measured in radians.
    pub fn is_rotational(self) -> bool {
        matches!(
            self,
            JointType::Revolute | JointType::Continuous | JointType::Screw
        )
    }
}

impl fmt::Display for JointType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SemanticLabel {
    Base,
    Door,
    Drawer,
    Handle,
    Knob,
    Tray,
}

impl SemanticLabel {
    pub const ALL: [SemanticLabel; 6] = [
        SemanticLabel::Base,
        SemanticLabel::Door,
        SemanticLabel::Drawer,
        SemanticLabel::Handle,
        SemanticLabel::Knob,
        SemanticLabel::Tray,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SemanticLabel::Base => "base",
            SemanticLabel::Door => "door",
            SemanticLabel::Drawer => "drawer",
            SemanticLabel::Handle => "handle",
            SemanticLabel::Knob => "knob",
            SemanticLabel::Tray => "tray",
        }
    }

    /// Small actionable parts that ride on a door or drawer.
    pub fn is_grip(self) -> bool {
        matches!(self, SemanticLabel::Handle | SemanticLabel::Knob)
    }
}

impl fmt::Display for SemanticLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SemanticLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        SemanticLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown label `{s}`"))
    }
}

impl FromStr for JointType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        JointType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown joint type `{s}`"))
    }
}

/// A joint attaching a part to its parent, expressed in the world frame at rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub joint_type: JointType,
    pub axis_origin: Vec3,
    pub axis_direction: Vec3,
    /// Radians for rotational joints, world units for prismatic.
    pub range: [f64; 2],
    /// World units per radian; only meaningful for screw joints.
    pub screw_pitch: f64,
}

impl Joint {
    pub fn fixed() -> Self {
        Joint {
            joint_type: JointType::Fixed,
            axis_origin: Vec3::zeros(),
            axis_direction: Vec3::z(),
            range: [0.0, 0.0],
            screw_pitch: DEFAULT_SCREW_PITCH,
        }
    }

    pub fn new(joint_type: JointType, origin: Vec3, direction: Vec3, range: [f64; 2]) -> Self {
        Joint {
            joint_type,
            axis_origin: origin,
            axis_direction: direction,
            range,
            screw_pitch: DEFAULT_SCREW_PITCH,
        }
        .canonical()
    }

    pub fn revolute(origin: Vec3, direction: Vec3, range: [f64; 2]) -> Self {
        Self::new(JointType::Revolute, origin, direction, range)
    }

    pub fn prismatic(origin: Vec3, direction: Vec3, range: [f64; 2]) -> Self {
        Self::new(JointType::Prismatic, origin, direction, range)
    }

    pub fn with_pitch(mut self, pitch: f64) -> Self {
        self.screw_pitch = pitch;
        self
    }

    /// Applies the type conventions: fixed joints have an empty range and
    /// continuous joints sweep one full turn. Directions are normalized.
    pub fn canonical(mut self) -> Self {
        match self.joint_type {
            JointType::Fixed => self.range = [0.0, 0.0],
            JointType::Continuous => self.range = [0.0, TAU],
            _ => {}
        }
        let n = self.axis_direction.norm();
        if n > 0.0 && n.is_finite() {
            self.axis_direction /= n;
        }
        self
    }

    /// Displacement at normalized coordinate `q`.
    pub fn displacement(&self, q: f64) -> f64 {
        self.range[0] + q * (self.range[1] - self.range[0])
    }

    pub fn check(&self, part: PartId) -> Result<()> {
        let bad = |reason: &str| KinematicsError::InvalidJoint {
            part,
            reason: reason.to_string(),
        };
        let finite = self.axis_origin.iter().all(|v| v.is_finite())
            && self.axis_direction.iter().all(|v| v.is_finite())
            && self.range.iter().all(|v| v.is_finite())
            && self.screw_pitch.is_finite();
        if !finite {
            return Err(bad("non-finite joint parameter"));
        }
        if (self.axis_direction.norm() - 1.0).abs() > 1e-6 {
            return Err(bad("axis direction is not unit length"));
        }
        if self.range[0] > self.range[1] {
            return Err(bad("range lower bound exceeds upper bound"));
        }
        if self.joint_type == JointType::Fixed && self.range != [0.0, 0.0] {
            return Err(bad("fixed joint with non-empty range"));
        }
        Ok(())
    }
}

/// Axis-aligned box at the resting state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Aabb { min, max }
    }

    pub fn from_center_half(center: Vec3, half: Vec3) -> Self {
        Aabb {
            min: center - half,
            max: center + half,
        }
    }

    pub fn cube(lo: f64, hi: f64) -> Self {
        Aabb::new(Vec3::repeat(lo), Vec3::repeat(hi))
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn half_extent(&self) -> Vec3 {
        (self.max - self.min) * 0.5
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn volume(&self) -> f64 {
        let e = self.extent();
        e.x * e.y * e.z
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.min.iter().chain(self.max.iter()).all(|v| v.is_finite())
            && (0..3).all(|k| self.min[k] <= self.max[k])
    }

    /// The 8 corners, x varying fastest.
    pub fn corners(&self) -> [Vec3; 8] {
        std::array::from_fn(|i| {
            Vec3::new(
                if i & 1 == 0 { self.min.x } else { self.max.x },
                if i & 2 == 0 { self.min.y } else { self.max.y },
                if i & 4 == 0 { self.min.z } else { self.max.z },
            )
        })
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Option<Aabb> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        Some(it.fold(Aabb::new(first, first), |acc, p| Aabb {
            min: acc.min.inf(p),
            max: acc.max.sup(p),
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartAbstraction {
    pub id: PartId,
    pub label: SemanticLabel,
    pub bbox: Aabb,
    pub joint: Joint,
    pub parent: Option<PartId>,
}

/// An articulated object at the part-abstraction level. Part order defines the
/// node order of the derived connectivity graph and the tensor row order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticulatedAbstraction {
    pub parts: Vec<PartAbstraction>,
    pub category: Option<String>,
}

impl ArticulatedAbstraction {
    pub fn new(parts: Vec<PartAbstraction>) -> Self {
        ArticulatedAbstraction {
            parts,
            category: None,
        }
    }

    pub fn graph(&self) -> ConnectivityGraph {
        ConnectivityGraph::from_nodes(self.parts.iter().map(|p| GraphNode {
            id: p.id,
            label: p.label,
            parent: p.parent,
        }))
    }

    pub fn part(&self, id: PartId) -> Option<&PartAbstraction> {
        self.parts.iter().find(|p| p.id == id)
    }

    pub fn part_mut(&mut self, id: PartId) -> Option<&mut PartAbstraction> {
        self.parts.iter_mut().find(|p| p.id == id)
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn children(&self, id: PartId) -> impl Iterator<Item = &PartAbstraction> {
        self.parts.iter().filter(move |p| p.parent == Some(id))
    }

    /// Full validation: graph structure, part cap, boxes and joints.
    pub fn validate(&self) -> Result<()> {
        super::validate_graph(&self.graph())?;
        if self.parts.len() > MAX_PARTS {
            return Err(KinematicsError::TooManyParts {
                count: self.parts.len(),
                max: MAX_PARTS,
            });
        }
        for p in &self.parts {
            if !p.bbox.is_valid() {
                return Err(KinematicsError::InvalidBox { part: p.id });
            }
            p.joint.check(p.id)?;
        }
        Ok(())
    }

    pub fn next_free_id(&self) -> PartId {
        self.parts.iter().map(|p| p.id + 1).max().unwrap_or(0)
    }
}
