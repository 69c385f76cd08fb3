//! Fixed-size attribute tensors consumed by the denoiser.
//!
//! Each part occupies five rows of six values:
//!
//! | row | contents |
//! |-----|----------|
//! | 0 | bbox center xyz, half-extent xyz |
//! | 1 | joint axis origin xyz, direction xyz |
//! | 2 | range lo, hi, screw pitch, 0, 0, 0 |
//! | 3 | joint type one-hot (5 types, last slot 0) |
//! | 4 | semantic label one-hot (6 labels) |

use serde::{Deserialize, Serialize};

use super::{DatasetError, Result};
use crate::kinematics::{
    Aabb, ArticulatedAbstraction, ConnectivityGraph, Joint, JointType, PartAbstraction,
    SemanticLabel, Vec3, MAX_PARTS,
};

pub const N_ATTRS: usize = 5;
pub const ATTR_DIM: usize = 6;
pub const PART_STRIDE: usize = N_ATTRS * ATTR_DIM;

pub const ROW_BBOX: usize = 0;
pub const ROW_AXIS: usize = 1;
pub const ROW_RANGE: usize = 2;
pub const ROW_TYPE: usize = 3;
pub const ROW_LABEL: usize = 4;

pub const MIN_HALF_EXTENT: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeTensor {
    /// `MAX_PARTS * N_ATTRS * ATTR_DIM` values, part-major.
    pub data: Vec<f64>,
    /// `true` for real parts.
    pub mask: Vec<bool>,
}

impl Default for AttributeTensor {
    fn default() -> Self {
        AttributeTensor {
            data: vec![0.0; MAX_PARTS * PART_STRIDE],
            mask: vec![false; MAX_PARTS],
        }
    }
}

impl AttributeTensor {
    pub fn n_parts(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    pub fn row(&self, part: usize, attr: usize) -> &[f64] {
        let o = part * PART_STRIDE + attr * ATTR_DIM;
        &self.data[o..o + ATTR_DIM]
    }

    pub fn row_mut(&mut self, part: usize, attr: usize) -> &mut [f64] {
        let o = part * PART_STRIDE + attr * ATTR_DIM;
        &mut self.data[o..o + ATTR_DIM]
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.data.iter().map(|v| *v as f32).collect()
    }
}

pub fn encode_attributes(obj: &ArticulatedAbstraction) -> Result<AttributeTensor> {
    if obj.parts.len() > MAX_PARTS {
        return Err(DatasetError::TooManyParts {
            count: obj.parts.len(),
            max: MAX_PARTS,
        });
    }
    let mut t = AttributeTensor::default();
    for (i, p) in obj.parts.iter().enumerate() {
        t.mask[i] = true;
        let (c, h) = (p.bbox.center(), p.bbox.half_extent());
        t.row_mut(i, ROW_BBOX).copy_from_slice(&[c.x, c.y, c.z, h.x, h.y, h.z]);
        let (o, d) = (p.joint.axis_origin, p.joint.axis_direction);
        t.row_mut(i, ROW_AXIS).copy_from_slice(&[o.x, o.y, o.z, d.x, d.y, d.z]);
        let r = p.joint.range;
        t.row_mut(i, ROW_RANGE)[..3].copy_from_slice(&[r[0], r[1], p.joint.screw_pitch]);
        t.row_mut(i, ROW_TYPE)[p.joint.joint_type.index()] = 1.0;
        t.row_mut(i, ROW_LABEL)[p.label.index()] = 1.0;
    }
    Ok(t)
}

fn argmax(xs: &[f64]) -> usize {
    xs.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

/// Inverse of [`encode_attributes`]. Row `i` of the tensor becomes graph node
/// `i`, which supplies the part id and parent.
pub fn decode_attributes(t: &AttributeTensor, g: &ConnectivityGraph) -> Result<ArticulatedAbstraction> {
    let n = t.n_parts();
    if n != g.len() || t.mask.iter().take(n).any(|m| !m) {
        return Err(DatasetError::MaskGraphMismatch { mask: n, graph: g.len() });
    }
    let parts = g
        .nodes
        .iter()
        .enumerate()
        .map(|(i, &(id, _))| {
            let b = t.row(i, ROW_BBOX);
            let half = Vec3::new(b[3], b[4], b[5]).map(|h| h.abs().max(MIN_HALF_EXTENT));
            let a = t.row(i, ROW_AXIS);
            let dir = Vec3::new(a[3], a[4], a[5]);
            let dir = if dir.norm() > 1e-12 { dir.normalize() } else { Vec3::z() };
            let r = t.row(i, ROW_RANGE);
            let joint_type = JointType::from_index(argmax(&t.row(i, ROW_TYPE)[..JointType::ALL.len()]))
                .expect("index within type count");
            let label = SemanticLabel::from_index(argmax(t.row(i, ROW_LABEL))).expect("six labels");
            let joint = Joint {
                joint_type,
                axis_origin: Vec3::new(a[0], a[1], a[2]),
                axis_direction: dir,
                range: [r[0].min(r[1]), r[0].max(r[1])],
                screw_pitch: r[2],
            }
            .canonical();
            PartAbstraction {
                id,
                label,
                bbox: Aabb::from_center_half(Vec3::new(b[0], b[1], b[2]), half),
                joint,
                parent: g.parent(id),
            }
        })
        .collect();
    Ok(ArticulatedAbstraction::new(parts))
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;

    fn base_and_drawer() -> ArticulatedAbstraction {
        ArticulatedAbstraction::new(vec![
            PartAbstraction {
                id: 0,
                label: SemanticLabel::Base,
                bbox: Aabb::cube(-1.0, 1.0),
                joint: Joint::fixed(),
                parent: None,
            },
            PartAbstraction {
                id: 4,
                label: SemanticLabel::Drawer,
                bbox: Aabb::new(Vec3::new(0.0, -0.5, -0.5), Vec3::new(1.0, 0.5, 0.0)),
                joint: Joint::prismatic(Vec3::zeros(), Vec3::x(), [0.0, 0.8]),
                parent: Some(0),
            },
        ])
    }

    #[test]
    fn base_rows() {
        let t = encode_attributes(&base_and_drawer()).unwrap();
        assert_eq!(t.row(0, ROW_BBOX), &[0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        assert_eq!(t.row(0, ROW_TYPE), &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(t.row(0, ROW_LABEL), &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(t.row(1, ROW_RANGE), &[0.0, 0.8, 0.05, 0.0, 0.0, 0.0]);
        assert_eq!(t.n_parts(), 2);
        assert!(t.data[2 * PART_STRIDE..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn round_trip() {
        let obj = base_and_drawer();
        let back = decode_attributes(&encode_attributes(&obj).unwrap(), &obj.graph()).unwrap();
        for (a, b) in obj.parts.iter().zip(&back.parts) {
            assert_eq!((a.id, a.label, a.parent, a.joint.joint_type), (b.id, b.label, b.parent, b.joint.joint_type));
            assert_abs_diff_eq!(a.bbox.min, b.bbox.min, epsilon = 1e-12);
            assert_abs_diff_eq!(a.bbox.max, b.bbox.max, epsilon = 1e-12);
        }
    }

    #[test]
    fn argmax_and_fallbacks() {
        let obj = base_and_drawer();
        let mut t = encode_attributes(&obj).unwrap();
        t.row_mut(1, ROW_LABEL).copy_from_slice(&[0.4, 0.35, 0.1, 0.05, 0.05, 0.05]);
        t.row_mut(1, ROW_AXIS)[3..].copy_from_slice(&[0.0, 0.0, 0.0]);
        let back = decode_attributes(&t, &obj.graph()).unwrap();
        assert_eq!(back.parts[1].label, SemanticLabel::Base);
        assert_eq!(back.parts[1].joint.axis_direction, Vec3::z());
    }

    #[test]
    fn mask_graph_mismatch() {
        let obj = base_and_drawer();
        let mut t = encode_attributes(&obj).unwrap();
        t.mask[1] = false;
        assert!(matches!(
            decode_attributes(&t, &obj.graph()),
            Err(DatasetError::MaskGraphMismatch { .. })
        ));
    }
}
