use nalgebra::Matrix3;

use super::polytope::ConvexPolytope;
use crate::kinematics::{Aabb, RigidTransform, Vec3};

/// Extents are clamped to this before computing volumes so plane-thin parts
/// keep the metrics finite.
pub const MIN_EXTENT: f64 = 1e-6;

/// A part box carried through its pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox {
    pub center: Vec3,
    pub axes: Matrix3<f64>,
    pub half: Vec3,
}

impl OrientedBox {
    pub fn posed(bbox: &Aabb, pose: &RigidTransform) -> Self {
        OrientedBox {
            center: pose.apply(&bbox.center()),
            axes: pose.rotation,
            half: bbox.half_extent(),
        }
    }

    pub fn axis_aligned(bbox: &Aabb) -> Self {
        Self::posed(bbox, &RigidTransform::identity())
    }

    fn clamped_half(&self) -> Vec3 {
        self.half.map(|h| h.max(MIN_EXTENT * 0.5))
    }

    pub fn volume(&self) -> f64 {
        let h = self.clamped_half();
        8.0 * h.x * h.y * h.z
    }

    pub fn corners(&self) -> [Vec3; 8] {
        let h = self.clamped_half();
        std::array::from_fn(|i| {
            let s = Vec3::new(
                if i & 1 == 0 { -h.x } else { h.x },
                if i & 2 == 0 { -h.y } else { h.y },
                if i & 4 == 0 { -h.z } else { h.z },
            );
            self.center + self.axes * s
        })
    }

    pub fn polytope(&self) -> ConvexPolytope {
        ConvexPolytope::oriented_box(&self.center, &self.axes, &self.clamped_half())
    }

    /// Outward half-spaces `n · x <= d`.
    fn planes(&self) -> [(Vec3, f64); 6] {
        let h = self.clamped_half();
        std::array::from_fn(|i| {
            let a = i / 2;
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            let n: Vec3 = self.axes.column(a) * sign;
            (n, n.dot(&self.center) + h[a])
        })
    }
}

pub fn intersection_volume(a: &OrientedBox, b: &OrientedBox) -> f64 {
    let (ca, cb) = (a.corners(), b.corners());
    let (aa, ab) = (
        Aabb::from_points(ca.iter()).expect("8 corners"),
        Aabb::from_points(cb.iter()).expect("8 corners"),
    );
    if (0..3).any(|k| aa.max[k] < ab.min[k] || ab.max[k] < aa.min[k]) {
        return 0.0;
    }
    let mut poly = a.polytope();
    for (n, d) in b.planes() {
        poly = poly.clip(&n, d);
        if poly.is_empty() {
            return 0.0;
        }
    }
    poly.volume().min(a.volume()).min(b.volume())
}

/// Volume of the smallest box with orientation `frame` that encloses both.
fn enclosing_volume(a: &OrientedBox, b: &OrientedBox, frame: &Matrix3<f64>) -> f64 {
    let local: Vec<Vec3> = a
        .corners()
        .iter()
        .chain(b.corners().iter())
        .map(|c| frame.transpose() * c)
        .collect();
    Aabb::from_points(local.iter()).expect("corners").volume()
}

/// `1 - gIoU`. The enclosing box is axis-aligned in the smallest of the world
/// frame and the two box frames, so posed copies of one box stay at zero.
pub fn d_giou_pair(a: &OrientedBox, b: &OrientedBox) -> f64 {
    // clipping a box against itself leaves rounding residue
    if a == b {
        return 0.0;
    }
    let inter = intersection_volume(a, b);
    let (va, vb) = (a.volume(), b.volume());
    let union = va + vb - inter;
    let vc = [Matrix3::identity(), a.axes, b.axes]
        .iter()
        .map(|f| enclosing_volume(a, b, f))
        .fold(f64::INFINITY, f64::min)
        .max(union);
    let giou = inter / union - (vc - union) / vc;
    (1.0 - giou).clamp(0.0, 2.0)
}

pub fn d_cdist_pair(a: &OrientedBox, b: &OrientedBox) -> f64 {
    (a.center - b.center).norm()
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_4;

    use approx::assert_abs_diff_eq;

    use super::*;

    fn aabb(min: [f64; 3], max: [f64; 3]) -> OrientedBox {
        OrientedBox::axis_aligned(&Aabb::new(Vec3::from(min), Vec3::from(max)))
    }

    #[test]
    fn identical_boxes_have_zero_distance() {
        let a = aabb([0.0, 0.0, 0.0], [1.0, 2.0, 0.5]);
        assert_eq!(d_giou_pair(&a, &a), 0.0);
        assert_eq!(d_cdist_pair(&a, &a), 0.0);
    }

    #[test]
    fn disjoint_hand_case() {
        let a = aabb([0.0; 3], [1.0; 3]);
        let b = aabb([2.0, 0.0, 0.0], [3.0, 1.0, 1.0]);
        // IoU 0, hull volume 3, union 2 -> gIoU = -1/3
        let expected = 1.0 - (0.0 - (3.0 - 2.0) / 3.0);
        assert_abs_diff_eq!(d_giou_pair(&a, &b), expected, epsilon = 1e-12);
    }

    #[test]
    fn half_overlap_volume() {
        let a = aabb([0.0; 3], [1.0; 3]);
        let b = aabb([0.5, 0.0, 0.0], [1.5, 1.0, 1.0]);
        assert_abs_diff_eq!(intersection_volume(&a, &b), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn rotated_box_overlap() {
        // unit cube rotated 45° about z around its own center overlaps itself
        // in a regular octagonal prism of area 2(√2 − 1)
        let a = aabb([-0.5; 3], [0.5; 3]);
        let pose = RigidTransform::rotation_about(Vec3::zeros(), Vec3::z(), FRAC_PI_4);
        let b = OrientedBox::posed(&Aabb::cube(-0.5, 0.5), &pose);
        let expected = 2.0 * (2f64.sqrt() - 1.0);
        assert_abs_diff_eq!(intersection_volume(&a, &b), expected, epsilon = 1e-9);
    }

    #[test]
    fn rotated_copy_has_zero_distance() {
        let pose = RigidTransform::rotation_about(Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 1.0), 0.9);
        let b = OrientedBox::posed(&Aabb::new(Vec3::zeros(), Vec3::new(1.0, 0.1, 2.0)), &pose);
        assert_abs_diff_eq!(d_giou_pair(&b, &b), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn centroid_distance() {
        let a = aabb([-0.5; 3], [0.5; 3]);
        let b = aabb([0.5, -0.5, -0.5], [1.5, 0.5, 0.5]);
        assert_abs_diff_eq!(d_cdist_pair(&a, &b), 1.0, epsilon = 1e-15);
    }
}
