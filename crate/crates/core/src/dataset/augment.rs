//! Training-set augmentation: handle/knob swapping, upside-down flips,
//! stacking and anisotropic rescaling.

use nalgebra::Matrix3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::aoj::ObjectRecord;
use super::{DatasetError, Result};
use crate::kinematics::{Aabb, PartId, Vec3, MAX_PARTS};

pub const SCALE_RANGE: (f64, f64) = (0.7, 1.3);
pub const HANDLE_JITTER: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub swap_handles: bool,
    pub flip: bool,
    pub stack: bool,
    pub scale: bool,
    /// Chance that a whitelisted record receives each enabled augmentation.
    pub swap_prob: f64,
    pub flip_prob: f64,
    pub stack_prob: f64,
    pub scale_prob: f64,
    pub seed: u64,
    pub categories: Vec<String>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            swap_handles: true,
            flip: true,
            stack: true,
            scale: true,
            swap_prob: 0.5,
            flip_prob: 0.5,
            stack_prob: 0.3,
            scale_prob: 0.5,
            seed: 0,
            categories: vec!["Table".into(), "StorageFurniture".into()],
        }
    }
}

impl AugmentConfig {
    pub fn check(&self) -> Result<()> {
        for p in [self.swap_prob, self.flip_prob, self.stack_prob, self.scale_prob] {
            if !(0.0..=1.0).contains(&p) {
                return Err(DatasetError::BadProbability(p));
            }
        }
        Ok(())
    }

    pub fn allows(&self, rec: &ObjectRecord) -> bool {
        rec.category().is_some_and(|c| self.categories.iter().any(|w| w == c))
    }
}

/// Seed for one record that does not depend on processing order.
pub fn record_seed(seed: u64, object_id: &str) -> u64 {
    let h = Sha256::digest(object_id.as_bytes());
    seed ^ u64::from_le_bytes(h[..8].try_into().expect("8 bytes"))
}

/// 180° rotation about the x axis.
pub fn augment_flip(rec: &ObjectRecord) -> Result<ObjectRecord> {
    let mut out = rec.clone();
    out.apply_affine(&Matrix3::from_diagonal(&Vec3::new(1.0, -1.0, -1.0)), &Vec3::zeros());
    out.renormalize()?;
    out.object.validate()?;
    out.id = format!("{}+flip", rec.id);
    Ok(out)
}

/// Per-axis scaling by `factors`, then renormalization.
pub fn augment_scale_by(rec: &ObjectRecord, factors: Vec3) -> Result<ObjectRecord> {
    let mut out = rec.clone();
    out.apply_affine(&Matrix3::from_diagonal(&factors), &Vec3::zeros());
    out.renormalize()?;
    out.object.validate()?;
    out.id = format!("{}+scale", rec.id);
    Ok(out)
}

pub fn augment_scale(rec: &ObjectRecord, seed: u64) -> Result<ObjectRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = Vec3::from_fn(|_, _| rng.random_range(SCALE_RANGE.0..=SCALE_RANGE.1));
    augment_scale_by(rec, f)
}

/// Places `b` on top of `a`, merging `b`'s base into `a`'s base.
pub fn augment_stack(a: &ObjectRecord, b: &ObjectRecord) -> Result<ObjectRecord> {
    let count = a.object.len() + b.object.len() - 1;
    if count > MAX_PARTS {
        return Err(DatasetError::TooManyParts { count, max: MAX_PARTS });
    }
    let (ua, ub) = (
        crate::kinematics::union_aabb(&a.object).ok_or(DatasetError::EmptyObject)?,
        crate::kinematics::union_aabb(&b.object).ok_or(DatasetError::EmptyObject)?,
    );
    let (ca, cb) = (ua.center(), ub.center());
    let shift = Vec3::new(ca.x - cb.x, ca.y - cb.y, ua.max.z - ub.min.z);
    let mut top = b.clone();
    top.apply_affine(&Matrix3::identity(), &shift);

    let a_root = a.object.graph().root().ok_or(DatasetError::EmptyObject)?;
    let b_root = top.object.graph().root().ok_or(DatasetError::EmptyObject)?;
    let offset = a.object.next_free_id();
    let remap = |id: PartId| if id == b_root { a_root } else { id + offset };

    let mut out = a.clone();
    for mut p in top.object.parts.into_iter() {
        if p.id == b_root {
            let base = out.object.part_mut(a_root).expect("root exists");
            base.bbox = base.bbox.union(&p.bbox);
            continue;
        }
        p.id = remap(p.id);
        p.parent = p.parent.map(remap);
        out.object.parts.push(p);
    }
    for (id, refs) in top.meshes {
        out.meshes.entry(remap(id)).or_default().extend(refs);
    }
    out.renormalize()?;
    out.object.validate()?;
    out.id = format!("{}+stack+{}", a.id, b.id);
    Ok(out)
}

/// Leaf handles and knobs, with the axis along which each sticks out of its
/// parent and the outward sign.
fn grips(rec: &ObjectRecord) -> Vec<(PartId, usize, f64)> {
    let obj = &rec.object;
    obj.parts
        .iter()
        .filter(|p| p.label.is_grip() && obj.children(p.id).next().is_none())
        .filter_map(|p| {
            let parent = obj.part(p.parent?)?;
            let (c, pc, ph) = (p.bbox.center(), parent.bbox.center(), parent.bbox.half_extent());
            let (axis, rel) = (0..3)
                .map(|k| (k, (c[k] - pc[k]) / ph[k].max(1e-9)))
                .max_by(|x, y| x.1.abs().total_cmp(&y.1.abs()))?;
            Some((p.id, axis, rel.signum()))
        })
        .collect()
}

/// Moves a donor grip onto `host`'s slot: the donor keeps its size, joint
/// type and range, and is seated on the host slot's parent face.
fn seat(
    host: &mut ObjectRecord,
    slot: (PartId, usize, f64),
    donor: &ObjectRecord,
    donor_id: PartId,
    rng: &mut ChaCha8Rng,
) {
    let (id, axis, sign) = slot;
    let dp = donor.object.part(donor_id).expect("grip exists").clone();
    let parent_box = {
        let parent = host.object.part(id).and_then(|p| p.parent).expect("grip has parent");
        host.object.part(parent).expect("parent exists").bbox
    };
    let old = host.object.part(id).expect("slot exists").clone();
    let half = dp.bbox.half_extent();
    let face = if sign >= 0.0 { parent_box.max[axis] } else { parent_box.min[axis] };
    let mut center = old.bbox.center();
    center[axis] = face + sign * half[axis];
    for k in (0..3).filter(|&k| k != axis) {
        let jitter = rng.random_range(-HANDLE_JITTER..=HANDLE_JITTER);
        let (lo, hi) = (parent_box.min[k] + half[k], parent_box.max[k] - half[k]);
        center[k] = if lo <= hi { (center[k] + jitter).clamp(lo, hi) } else { parent_box.center()[k] };
    }
    let delta = center - dp.bbox.center();
    let part = host.object.part_mut(id).expect("slot exists");
    part.label = dp.label;
    part.bbox = Aabb::from_center_half(center, half);
    part.joint = dp.joint.clone();
    part.joint.axis_origin += delta;
    let moved: Vec<_> = donor
        .meshes
        .get(&donor_id)
        .map(|refs| {
            refs.iter()
                .map(|r| {
                    let mut r = r.clone();
                    r.transform = r.transform.then(&Matrix3::identity(), &delta);
                    r
                })
                .collect()
        })
        .unwrap_or_default();
    if moved.is_empty() {
        host.meshes.remove(&id);
    } else {
        host.meshes.insert(id, moved);
    }
}

/// Exchanges leaf handles/knobs between randomly paired records.
pub fn augment_swap_handles(records: &[ObjectRecord], seed: u64) -> Result<Vec<ObjectRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = records.to_vec();
    let mut eligible: Vec<usize> = (0..records.len()).filter(|&i| !grips(&records[i]).is_empty()).collect();
    eligible.shuffle(&mut rng);
    for pair in eligible.chunks_exact(2) {
        let (i, j) = (pair[0], pair[1]);
        let (gi, gj) = (grips(&records[i]), grips(&records[j]));
        for (si, sj) in gi.iter().zip(gj.iter()) {
            seat(&mut out[i], *si, &records[j], sj.0, &mut rng);
            seat(&mut out[j], *sj, &records[i], si.0, &mut rng);
        }
        for k in [i, j] {
            out[k].renormalize()?;
            out[k].object.validate()?;
            out[k].id = format!("{}+swap", records[k].id);
        }
    }
    Ok(out)
}

/// Originals followed by augmented variants of whitelisted records.
pub fn augment_dataset(records: &[ObjectRecord], cfg: &AugmentConfig) -> Result<Vec<ObjectRecord>> {
    cfg.check()?;
    let mut out = records.to_vec();
    let allowed: Vec<&ObjectRecord> = records.iter().filter(|r| cfg.allows(r)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    if cfg.swap_handles {
        let picked: Vec<ObjectRecord> = allowed
            .iter()
            .filter(|_| rng.random_bool(cfg.swap_prob))
            .map(|r| (*r).clone())
            .collect();
        let swapped = augment_swap_handles(&picked, rng.random())?;
        out.extend(swapped.into_iter().filter(|r| r.id.ends_with("+swap")));
    }
    for r in &allowed {
        let rs = record_seed(cfg.seed, &r.id);
        let mut local = ChaCha8Rng::seed_from_u64(rs);
        if cfg.flip && local.random_bool(cfg.flip_prob) {
            out.push(augment_flip(r)?);
        }
        if cfg.scale && local.random_bool(cfg.scale_prob) {
            out.push(augment_scale(r, local.random())?);
        }
        if cfg.stack && allowed.len() > 1 && local.random_bool(cfg.stack_prob) {
            let other = allowed[local.random_range(0..allowed.len())];
            if other.id != r.id && r.object.len() + other.object.len() - 1 <= MAX_PARTS {
                out.push(augment_stack(r, other)?);
            }
        }
    }
    Ok(out)
}
