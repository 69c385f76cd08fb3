//! Deterministic stand-in for image features: an orthographic ray cast of
//! the resting part boxes, summarized per patch.
//!
//! Per patch the 32 features are: coverage fraction, normalized depth of the
//! nearest hit, the fraction of pixels whose nearest part has each of the six
//! labels, and a fixed 24-dim positional code.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{ForegroundMask, PatchFeatureGrid, GRID, N_PATCHES, SYNTH_DIM};
use super::{ConditioningError, Result};
use crate::kinematics::{Aabb, ArticulatedAbstraction, SemanticLabel, Vec3};

pub const IMAGE_SIZE: usize = 224;
pub const PATCH_PIXELS: usize = IMAGE_SIZE / GRID;
pub const POS_DIM: usize = 24;
pub const SLOT_COVERAGE: usize = 0;
pub const SLOT_DEPTH: usize = 1;
pub const SLOT_LABELS: usize = 2;
pub const SLOT_POS: usize = 8;

const POS_SEED: u64 = 0x9E37_79B9_7F4A_7C15;
/// Half the field of view of the frame, so the frame half-width is
/// `distance * tan(30°)`.
const HALF_FOV_DEG: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraSpec {
    pub azimuth: f64,
    pub elevation: f64,
    pub distance: f64,
    pub orthographic: bool,
}

impl Default for CameraSpec {
    /// Straight on from the front.
    fn default() -> Self {
        CameraSpec {
            azimuth: 0.0,
            elevation: 0.0,
            distance: 3.0,
            orthographic: true,
        }
    }
}

impl CameraSpec {
    /// Unit vector from the origin toward the camera.
    pub fn eye_direction(&self) -> Vec3 {
        let (az, el) = (self.azimuth.to_radians(), self.elevation.to_radians());
        Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
    }

    /// Image right and up vectors.
    pub fn image_axes(&self) -> (Vec3, Vec3) {
        let az = self.azimuth.to_radians();
        let right = Vec3::new(-az.sin(), az.cos(), 0.0);
        let forward = -self.eye_direction();
        (right, right.cross(&forward))
    }

    pub fn half_width(&self) -> f64 {
        self.distance * HALF_FOV_DEG.to_radians().tan()
    }
}

/// Azimuth in [-45, 45] and elevation in [0, 90] degrees, uniformly.
pub fn sample_camera(seed: u64) -> CameraSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    CameraSpec {
        azimuth: rng.random_range(-45.0..=45.0),
        elevation: rng.random_range(0.0..=90.0),
        ..CameraSpec::default()
    }
}

/// Entry distance of the ray `o + t d` into the box, if it hits.
fn ray_box(o: &Vec3, d: &Vec3, b: &Aabb) -> Option<f64> {
    let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
    for k in 0..3 {
        if d[k].abs() < 1e-15 {
            if o[k] < b.min[k] || o[k] > b.max[k] {
                return None;
            }
            continue;
        }
        let (a, c) = ((b.min[k] - o[k]) / d[k], (b.max[k] - o[k]) / d[k]);
        t0 = t0.max(a.min(c));
        t1 = t1.min(a.max(c));
    }
    (t0 <= t1 && t1 >= 0.0).then_some(t0.max(0.0))
}

/// Per-patch raw statistics: (hit pixels, min depth, label counts).
struct PatchStats {
    hits: u32,
    depth: f64,
    labels: [u32; 6],
}

fn rasterize(obj: &ArticulatedAbstraction, cam: &CameraSpec) -> Result<Vec<PatchStats>> {
    if !(cam.distance > 0.0) || !cam.distance.is_finite() {
        return Err(ConditioningError::DegenerateProjection);
    }
    let eye = cam.eye_direction() * cam.distance;
    let forward = -cam.eye_direction();
    let (right, up) = cam.image_axes();
    let boxes: Vec<(Aabb, SemanticLabel)> = obj.parts.iter().map(|p| (p.bbox, p.label)).collect();
    if boxes
        .iter()
        .flat_map(|(b, _)| b.corners())
        .any(|c| (c - eye).dot(&forward) <= 0.0)
    {
        return Err(ConditioningError::DegenerateProjection);
    }
    let hw = cam.half_width();
    let pixel = 2.0 * hw / IMAGE_SIZE as f64;
    let mut stats: Vec<PatchStats> = (0..N_PATCHES)
        .map(|_| PatchStats {
            hits: 0,
            depth: f64::INFINITY,
            labels: [0; 6],
        })
        .collect();
    for py in 0..IMAGE_SIZE {
        // image row 0 is the top of the frame
        let v = hw - (py as f64 + 0.5) * pixel;
        for px in 0..IMAGE_SIZE {
            let u = -hw + (px as f64 + 0.5) * pixel;
            let origin = eye + right * u + up * v;
            let nearest = boxes
                .iter()
                .filter_map(|(b, l)| ray_box(&origin, &forward, b).map(|t| (t, *l)))
                .min_by(|a, b| a.0.total_cmp(&b.0));
            if let Some((t, label)) = nearest {
                let s = &mut stats[(py / PATCH_PIXELS) * GRID + px / PATCH_PIXELS];
                s.hits += 1;
                s.depth = s.depth.min(t);
                s.labels[label.index()] += 1;
            }
        }
    }
    Ok(stats)
}

/// Fixed code for patch `i`, independent of the object and camera.
pub fn positional_code(i: usize) -> [f32; POS_DIM] {
    let mut rng = ChaCha8Rng::seed_from_u64(POS_SEED ^ i as u64);
    std::array::from_fn(|_| rng.random_range(-1.0f32..1.0))
}

pub fn synthetic_features(
    obj: &ArticulatedAbstraction,
    cam: &CameraSpec,
) -> Result<(PatchFeatureGrid, ForegroundMask)> {
    let stats = rasterize(obj, cam)?;
    let per_patch = (PATCH_PIXELS * PATCH_PIXELS) as f64;
    // the normalized object fits in a sphere of radius sqrt(3)
    let near = cam.distance - 3f64.sqrt();
    let span = 2.0 * 3f64.sqrt();
    let mut grid = PatchFeatureGrid::zeros(SYNTH_DIM);
    let mut mask = ForegroundMask::default();
    for (i, s) in stats.iter().enumerate() {
        let f = grid.patch_mut(i);
        if s.hits > 0 {
            f[SLOT_COVERAGE] = (s.hits as f64 / per_patch) as f32;
            f[SLOT_DEPTH] = ((s.depth - near) / span).clamp(0.0, 1.0) as f32;
            for (k, c) in s.labels.iter().enumerate() {
                f[SLOT_LABELS + k] = (*c as f64 / per_patch) as f32;
            }
            mask.0[i] = true;
        }
        f[SLOT_POS..].copy_from_slice(&positional_code(i));
    }
    Ok((grid, mask))
}

pub fn mask_from_silhouette(obj: &ArticulatedAbstraction, cam: &CameraSpec) -> Result<ForegroundMask> {
    Ok(ForegroundMask(rasterize(obj, cam)?.iter().map(|s| s.hits > 0).collect()))
}
