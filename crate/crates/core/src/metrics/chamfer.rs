use rayon::prelude::*;

use super::{MetricsError, Result};
use crate::kinematics::Vec3;
use crate::mesh::TriMesh;

/// Points sampled per part surface.
pub const DEFAULT_POINTS: usize = 2048;

/// Symmetric Chamfer distance between two point sets: mean nearest-neighbor
/// distance from each side, summed. `squared` selects squared distances.
pub fn chamfer_points(a: &[Vec3], b: &[Vec3], squared: bool) -> f64 {
    let one_way = |from: &[Vec3], to: &[Vec3]| -> f64 {
        let total: f64 = from
            .par_iter()
            .map(|p| {
                let d2 = to
                    .iter()
                    .map(|q| (p - q).norm_squared())
                    .fold(f64::INFINITY, f64::min);
                if squared {
                    d2
                } else {
                    d2.sqrt()
                }
            })
            .sum();
        total / from.len() as f64
    };
    one_way(a, b) + one_way(b, a)
}

/// Chamfer distance between surface samples of two meshes, both drawn with
/// the same seed.
pub fn d_cd_pair(
    a: &TriMesh,
    b: &TriMesh,
    n_points: usize,
    seed: u64,
    squared: bool,
) -> Result<f64> {
    let pa = a.sample_surface(n_points, seed).map_err(|_| MetricsError::EmptyMesh)?;
    let pb = b.sample_surface(n_points, seed).map_err(|_| MetricsError::EmptyMesh)?;
    Ok(chamfer_points(&pa, &pb, squared))
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;
    use crate::kinematics::RigidTransform;

    #[test]
    fn self_distance_is_zero() {
        let m = TriMesh::unit_box();
        assert_eq!(d_cd_pair(&m, &m, 256, 9, true).unwrap(), 0.0);
    }

    #[test]
    fn grows_with_offset() {
        let m = TriMesh::unit_box();
        let mut last = 0.0;
        for t in [0.1, 0.2, 0.4] {
            let shifted = m.scaled(&Vec3::repeat(1.0), &Vec3::new(t, 0.0, 0.0));
            let d = d_cd_pair(&m, &shifted, 512, 1, true).unwrap();
            assert!(d > last, "t={t}: {d} <= {last}");
            last = d;
        }
    }

    #[test]
    fn rigid_motion_invariance() {
        let a = TriMesh::unit_box();
        let b = TriMesh::cylinder(16);
        let tf = RigidTransform::rotation_about(Vec3::new(0.2, 0.1, 0.0), Vec3::new(1.0, 1.0, 0.0), 0.7);
        let d0 = d_cd_pair(&a, &b, 300, 4, true).unwrap();
        let d1 = d_cd_pair(&a.transformed(&tf), &b.transformed(&tf), 300, 4, true).unwrap();
        assert_abs_diff_eq!(d0, d1, epsilon = 1e-6);
    }

    #[test]
    fn empty_mesh_errors() {
        let m = TriMesh::unit_box();
        assert!(matches!(
            d_cd_pair(&m, &TriMesh::default(), 10, 0, true),
            Err(MetricsError::EmptyMesh)
        ));
    }
}
