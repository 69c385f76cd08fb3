//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 when any
//! criterion fails. Every check compares against an oracle written here,
//! independently of the library code it exercises.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use artic::conditioning::{sample_camera, synthetic_features, CameraSpec, ForegroundMask, N_PATCHES, SYNTH_DIM};
use artic::dataset::synth::{synth_dataset, synth_object};
use artic::dataset::{
    category_index, decode_attributes, encode_attributes, object_to_json, ObjectRecord, ATTR_DIM, CATEGORIES, N_ATTRS,
};
use artic::diffusion::{
    add_noise, cfg_epsilon, draw_dropout, foreground_loss, sample, sample_noise, save_checkpoint, AttentionRecord,
    ConditioningBundle, Denoiser, DenoiserConfig, DropoutRates, NoiseSchedule, SamplerConfig, TrainConfig,
    TrainSample, Trainer,
};
use artic::graph::{canonical_form, graph_topology_accuracy};
use artic::kinematics::{
    adjacency_matrix, joint_transform, pose_parts, Aabb, ArticulatedAbstraction, ArticulationState,
    ConnectivityGraph, GraphNode, Joint, JointType, PartAbstraction, PartId, SemanticLabel, Vec3, MAX_PARTS,
};
use artic::metrics::{aor, aor_at, d_giou_pair, eval_d, hungarian, DistanceKind, EvalConfig, EvalObject, OrientedBox, StateMode};
use artic::pipeline::eval_object;
use artic::retrieval::{assemble, write_box_meshes, PartLibrary, RetrievalConfig};
use artic::service::{router, AppState, ServiceConfig};
use candle_core::{Device, Tensor};
use nalgebra::{Matrix3, Matrix4, UnitQuaternion};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::{json, Value};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn unit_vector(r: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

fn random_box(r: &mut ChaCha8Rng) -> Aabb {
    let c = Vec3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
    let h = Vec3::new(r.random_range(0.05..1.0), r.random_range(0.05..1.0), r.random_range(0.05..1.0));
    Aabb::from_center_half(c, h)
}

// ---------------------------------------------------------------------------
// Hungarian against exhaustive enumeration

/// Minimum over all injective maps from the smaller side into the larger.
fn brute_force_assignment(cost: &[Vec<f64>]) -> f64 {
    let (n, m) = (cost.len(), cost[0].len());
    let c = |i: usize, j: usize| if n <= m { cost[i][j] } else { cost[j][i] };
    let (small, large) = (n.min(m), n.max(m));
    fn go(k: usize, small: usize, large: usize, used: &mut Vec<bool>, acc: f64, c: &dyn Fn(usize, usize) -> f64, best: &mut f64) {
        if k == small {
            *best = best.min(acc);
            return;
        }
        for j in 0..large {
            if !used[j] {
                used[j] = true;
                go(k + 1, small, large, used, acc + c(k, j), c, best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(0, small, large, &mut vec![false; large], 0.0, &c, &mut best);
    best
}

fn hungarian_oracle() -> Check {
    let start = Instant::now();
    let mut r = rng(1);
    for case in 0..500 {
        let (n, m) = (r.random_range(1..=6), r.random_range(1..=6));
        // integer costs keep every sum exact, so ties compare exactly
        let cost: Vec<Vec<f64>> = (0..n).map(|_| (0..m).map(|_| r.random_range(0..20) as f64).collect()).collect();
        let a = hungarian(&cost).map_err(|e| format!("case {case}: {e}"))?;
        let want = brute_force_assignment(&cost);
        let rows: BTreeSet<usize> = a.pairs.iter().map(|p| p.0).collect();
        let cols: BTreeSet<usize> = a.pairs.iter().map(|p| p.1).collect();
        let k = n.min(m);
        ensure(a.pairs.len() == k && rows.len() == k && cols.len() == k, || format!("case {case}: not a matching"))?;
        let recomputed: f64 = a.pairs.iter().map(|&(i, j)| cost[i][j]).sum();
        ensure(a.total == want && recomputed == want, || {
            format!("case {case}: total {} recomputed {recomputed}, enumeration {want}", a.total)
        })?;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 10.0, || format!("took {secs:.2}s"))?;
    Ok(format!("500 matrices equal, {secs:.2}s"))
}

// ---------------------------------------------------------------------------
// Object distance identities

fn eval_identities() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = EvalConfig {
        n_points: 256,
        ..Default::default()
    };
    let objects: Vec<EvalObject> = (0..50)
        .map(|i| {
            let mut rec = synth_object(CATEGORIES[i % CATEGORIES.len()], i as u64);
            write_box_meshes(&mut rec, dir.path()).map_err(|e| e.to_string())?;
            eval_object(rec).map_err(|e| e.to_string())
        })
        .collect::<Result<_, _>>()?;
    let modes = [StateMode::Rs, StateMode::As];
    for (i, o) in objects.iter().enumerate() {
        for kind in DistanceKind::ALL {
            for mode in modes {
                let d = eval_d(o, o, kind, mode, &cfg).map_err(|e| e.to_string())?;
                ensure(d == 0.0, || format!("object {i} {kind:?} {mode:?}: self distance {d}"))?;
            }
        }
    }
    let raw = EvalConfig {
        scale_normalize: false,
        ..cfg
    };
    let mut worst = 0.0f64;
    for i in 0..objects.len() {
        let (a, b) = (&objects[i], &objects[(i + 1) % objects.len()]);
        for kind in DistanceKind::ALL {
            for mode in modes {
                let ab = eval_d(a, b, kind, mode, &raw).map_err(|e| e.to_string())?;
                let ba = eval_d(b, a, kind, mode, &raw).map_err(|e| e.to_string())?;
                worst = worst.max((ab - ba).abs());
            }
        }
    }
    ensure(worst < 1e-9, || format!("asymmetry {worst:e}"))?;
    Ok(format!("50 objects, 3 distances x RS/AS(k=5) self = 0, max asymmetry {worst:.1e}"))
}

// ---------------------------------------------------------------------------
// gIoU

/// gIoU distance of two axis-aligned boxes straight from the definition.
fn giou_distance_oracle(a: &Aabb, b: &Aabb) -> f64 {
    let overlap = |k: usize| (a.max[k].min(b.max[k]) - a.min[k].max(b.min[k])).max(0.0);
    let inter = overlap(0) * overlap(1) * overlap(2);
    let vol = |x: &Aabb| (0..3).map(|k| x.max[k] - x.min[k]).product::<f64>();
    let union = vol(a) + vol(b) - inter;
    let hull: f64 = (0..3).map(|k| a.max[k].max(b.max[k]) - a.min[k].min(b.min[k])).product();
    1.0 - (inter / union - (hull - union) / hull)
}

fn giou_checks() -> Check {
    let a = Aabb::cube(0.0, 1.0);
    let b = Aabb::new(Vec3::new(2.0, 0.0, 0.0), Vec3::new(3.0, 1.0, 1.0));
    let oracle = giou_distance_oracle(&a, &b);
    let d = d_giou_pair(&OrientedBox::axis_aligned(&a), &OrientedBox::axis_aligned(&b));
    ensure((oracle - 4.0 / 3.0).abs() < 1e-9, || format!("oracle gives {oracle}"))?;
    ensure((d - 4.0 / 3.0).abs() < 1e-9, || format!("hand case gives {d}"))?;

    let mut r = rng(3);
    let mut worst_aligned = 0.0f64;
    for i in 0..10_000 {
        let (ba, bb) = (random_box(&mut r), random_box(&mut r));
        let pose = |r: &mut ChaCha8Rng| {
            let q = UnitQuaternion::from_scaled_axis(unit_vector(r) * r.random_range(0.0..std::f64::consts::PI));
            artic::kinematics::RigidTransform {
                rotation: q.to_rotation_matrix().into_inner(),
                translation: Vec3::new(r.random_range(-0.5..0.5), r.random_range(-0.5..0.5), r.random_range(-0.5..0.5)),
            }
        };
        let (pa, pb) = (pose(&mut r), pose(&mut r));
        let d = d_giou_pair(&OrientedBox::posed(&ba, &pa), &OrientedBox::posed(&bb, &pb));
        ensure(d.is_finite() && (0.0..=2.0).contains(&d), || format!("pair {i}: {d}"))?;
        // axis-aligned pairs also have a closed form to compare with
        let aligned = d_giou_pair(&OrientedBox::axis_aligned(&ba), &OrientedBox::axis_aligned(&bb));
        worst_aligned = worst_aligned.max((aligned - giou_distance_oracle(&ba, &bb)).abs());
    }
    ensure(worst_aligned < 1e-9, || format!("axis-aligned deviation {worst_aligned:e}"))?;
    Ok(format!("hand case {d:.12}, 10^4 posed pairs in [0,2], axis-aligned deviation {worst_aligned:.1e}"))
}

// ---------------------------------------------------------------------------
// Forward kinematics

fn skew(u: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -u.z, u.y, u.z, 0.0, -u.x, -u.y, u.x, 0.0)
}

fn homogeneous_translation(t: &Vec3) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m[(0, 3)] = t.x;
    m[(1, 3)] = t.y;
    m[(2, 3)] = t.z;
    m
}

/// Rodrigues rotation about the line through `o` along unit `u`, as
/// `T(o) R T(-o)`.
fn homogeneous_rotation(o: &Vec3, u: &Vec3, angle: f64) -> Matrix4<f64> {
    let k = skew(u);
    let r = Matrix3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos());
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    homogeneous_translation(o) * m * homogeneous_translation(&-o)
}

fn joint_matrix(j: &Joint, q: f64) -> Matrix4<f64> {
    let d = j.range[0] + q * (j.range[1] - j.range[0]);
    let u = j.axis_direction;
    match j.joint_type {
        JointType::Fixed => Matrix4::identity(),
        JointType::Prismatic => homogeneous_translation(&(u * d)),
        JointType::Revolute | JointType::Continuous => homogeneous_rotation(&j.axis_origin, &u, d),
        JointType::Screw => homogeneous_translation(&(u * (d * j.screw_pitch))) * homogeneous_rotation(&j.axis_origin, &u, d),
    }
}

fn random_joint(r: &mut ChaCha8Rng) -> Joint {
    let ty = JointType::ALL[r.random_range(0..JointType::ALL.len())];
    let origin = Vec3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
    let lo: f64 = r.random_range(-1.5..0.0);
    let hi: f64 = r.random_range(0.0..1.5);
    Joint::new(ty, origin, unit_vector(r), [lo, hi]).with_pitch(r.random_range(-0.3..0.3))
}

fn random_chain(r: &mut ChaCha8Rng) -> ArticulatedAbstraction {
    let len = r.random_range(2..=6);
    let parts = (0..len)
        .map(|k| PartAbstraction {
            id: k as PartId,
            label: if k == 0 { SemanticLabel::Base } else { SemanticLabel::Drawer },
            bbox: random_box(r),
            joint: if k == 0 { Joint::fixed() } else { random_joint(r) },
            parent: (k > 0).then(|| k as PartId - 1),
        })
        .collect();
    ArticulatedAbstraction::new(parts)
}

fn fk_invariants() -> Check {
    let mut r = rng(4);
    let mut worst_compose = 0.0f64;
    let mut worst_ortho = 0.0f64;
    let mut prismatic = 0usize;
    for c in 0..1000 {
        let obj = random_chain(&mut r);
        obj.validate().map_err(|e| format!("chain {c}: {e}"))?;
        let state = ArticulationState {
            q: obj.parts.iter().map(|p| (p.id, r.random_range(0.0..=1.0))).collect(),
        };
        let poses = pose_parts(&obj, &state).map_err(|e| e.to_string())?;
        let mut oracle = Matrix4::identity();
        for p in &obj.parts {
            oracle *= joint_matrix(&p.joint, state.get(p.id));
            let pose = &poses[&p.id];
            worst_compose = worst_compose.max((pose.to_homogeneous() - oracle).amax());
            let rot = pose.rotation;
            worst_ortho = worst_ortho.max((rot.transpose() * rot - Matrix3::identity()).amax());
            worst_ortho = worst_ortho.max((rot.determinant() - 1.0).abs());

            // a joint at zero displacement is the identity
            let rest = Joint { range: [0.0, p.joint.range[1].max(0.0)], ..p.joint.clone() }.canonical();
            let t0 = joint_transform(&rest, 0.0).map_err(|e| e.to_string())?;
            ensure(t0.rotation == Matrix3::identity() && t0.translation == Vec3::zeros(), || {
                format!("chain {c} part {}: {:?} at zero displacement is {t0:?}", p.id, p.joint.joint_type)
            })?;

            // a prismatic joint is a pure translation of exactly d along its unit axis
            if p.joint.joint_type == JointType::Prismatic {
                prismatic += 1;
                let q = state.get(p.id);
                let t = joint_transform(&p.joint, q).map_err(|e| e.to_string())?;
                let d = p.joint.range[0] + q * (p.joint.range[1] - p.joint.range[0]);
                ensure(t.rotation == Matrix3::identity() && t.translation == p.joint.axis_direction * d, || {
                    format!("chain {c} part {}: prismatic transform {t:?}", p.id)
                })?;
            }
        }
    }
    ensure(worst_compose < 1e-9, || format!("composition deviation {worst_compose:e}"))?;
    ensure(worst_ortho < 1e-6, || format!("orthonormality deviation {worst_ortho:e}"))?;
    Ok(format!(
        "1000 chains, composition deviation {worst_compose:.1e}, orthonormality {worst_ortho:.1e}, {prismatic} prismatic joints exact"
    ))
}

// ---------------------------------------------------------------------------
// Attribute encoding

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()))
}

fn close3(a: &Vec3, b: &Vec3) -> bool {
    (0..3).all(|k| close(a[k], b[k]))
}

fn encoding_round_trip() -> Check {
    let recs = synth_dataset(50, 5, &CATEGORIES);
    for rec in &recs {
        let obj = &rec.object;
        let t = encode_attributes(obj).map_err(|e| e.to_string())?;
        let back = decode_attributes(&t, &obj.graph()).map_err(|e| e.to_string())?;
        ensure(back.parts.len() == obj.parts.len(), || format!("{}: part count", rec.id))?;
        for (a, b) in obj.parts.iter().zip(&back.parts) {
            let (ja, jb) = (&a.joint, &b.joint);
            let same = a.id == b.id
                && a.label == b.label
                && a.parent == b.parent
                && close3(&a.bbox.min, &b.bbox.min)
                && close3(&a.bbox.max, &b.bbox.max)
                && ja.joint_type == jb.joint_type
                && close3(&ja.axis_origin, &jb.axis_origin)
                && close3(&ja.axis_direction, &jb.axis_direction)
                && close(ja.range[0], jb.range[0])
                && close(ja.range[1], jb.range[1])
                && close(ja.screw_pitch, jb.screw_pitch);
            ensure(same, || format!("{} part {}: {a:?} decoded as {b:?}", rec.id, a.id))?;
        }
        let stride = N_ATTRS * ATTR_DIM;
        let n = obj.parts.len();
        ensure(t.mask.len() == MAX_PARTS && t.data.len() == MAX_PARTS * stride, || "tensor shape".into())?;
        ensure(t.mask[..n].iter().all(|m| *m) && t.mask[n..].iter().all(|m| !m), || format!("{}: mask", rec.id))?;
        ensure(t.data[n * stride..].iter().all(|v| *v == 0.0), || format!("{}: padded rows not zero", rec.id))?;
    }
    Ok("50 objects reproduced, padded rows zero".into())
}

// ---------------------------------------------------------------------------
// Diffusion mechanisms

fn small_config() -> DenoiserConfig {
    DenoiserConfig {
        layers: 2,
        heads: 2,
        hidden: 16,
        d_f: SYNTH_DIM,
        steps: 50,
        ..Default::default()
    }
}

/// A freshly initialized model has zero gates and output head; nudging every
/// weight makes all paths contribute.
fn perturbed_model(seed: u64) -> Result<Denoiser, String> {
    let m = Denoiser::new(small_config(), seed).map_err(|e| e.to_string())?;
    let mut r = rng(seed);
    let normal = Normal::new(0.0, 0.1).expect("valid normal");
    for v in m.vars().values() {
        let noise: Vec<f32> = (0..v.elem_count()).map(|_| normal.sample(&mut r) as f32).collect();
        let delta = Tensor::from_vec(noise, v.shape().clone(), &Device::Cpu).map_err(|e| e.to_string())?;
        let next = (v.as_tensor() + delta).map_err(|e| e.to_string())?;
        v.set(&next).map_err(|e| e.to_string())?;
    }
    Ok(m)
}

fn conditioned(rec: &ObjectRecord, cam: &CameraSpec) -> Result<TrainSample, String> {
    let (f, m) = synthetic_features(&rec.object, cam).map_err(|e| e.to_string())?;
    Ok(TrainSample {
        x0: encode_attributes(&rec.object).map_err(|e| e.to_string())?,
        cond: ConditioningBundle {
            features: Some(f),
            graph: Some(adjacency_matrix(&rec.object.graph(), MAX_PARTS).map_err(|e| e.to_string())?),
            category: rec.category().and_then(category_index),
            fg_mask: Some(m),
        },
    })
}

fn graph_mask_zero(model: &Denoiser, ex: &TrainSample, g: &ConnectivityGraph) -> Result<String, String> {
    let sched = model.config().schedule().map_err(|e| e.to_string())?;
    let related = |i: usize, j: usize| {
        if i == j {
            return true;
        }
        let (Some(&(a, _)), Some(&(b, _))) = (g.nodes.get(i), g.nodes.get(j)) else {
            return false;
        };
        g.parent_of.get(&a) == Some(&b) || g.parent_of.get(&b) == Some(&a)
    };
    let mut masked = 0usize;
    for t in [1, 25, 50] {
        let eps = sample_noise(&ex.x0, &mut rng(t as u64));
        let x_t = add_noise(&ex.x0, t, &eps, &sched).map_err(|e| e.to_string())?;
        let attn = model.graph_attention(&x_t, t, &ex.cond).map_err(|e| e.to_string())?;
        for (l, layer) in attn.iter().enumerate() {
            for head in layer {
                for (i, row) in head.iter().enumerate() {
                    let sum: f32 = row.iter().sum();
                    ensure((sum - 1.0).abs() < 1e-4, || format!("t {t} layer {l} row {i} sums to {sum}"))?;
                    for (j, w) in row.iter().enumerate() {
                        if !related(i / N_ATTRS, j / N_ATTRS) {
                            masked += 1;
                            ensure(*w == 0.0, || format!("t {t} layer {l}: token {i} -> {j} has weight {w}"))?;
                        }
                    }
                }
            }
        }
    }
    ensure(masked > 0, || "no masked pairs examined".into())?;
    Ok(format!("{masked} masked weights exactly 0"))
}

fn cfg_collapse(model: &Denoiser, ex: &TrainSample) -> Result<String, String> {
    let sched = model.config().schedule().map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for t in [1, 25, 50] {
        let eps = sample_noise(&ex.x0, &mut rng(100 + t as u64));
        let x_t = add_noise(&ex.x0, t, &eps, &sched).map_err(|e| e.to_string())?;
        let guided = cfg_epsilon(model, &x_t, t, &ex.cond, 0.0).map_err(|e| e.to_string())?;
        let (cond, _) = model.denoise_step(&x_t, t, &ex.cond).map_err(|e| e.to_string())?;
        let (uncond, _) = model.denoise_step(&x_t, t, &ex.cond.without_image()).map_err(|e| e.to_string())?;
        ensure(cond.data != uncond.data, || "image condition has no effect".into())?;
        for (a, b) in guided.data.iter().zip(&cond.data) {
            worst = worst.max((a - b).abs());
        }
    }
    ensure(worst < 1e-6, || format!("deviation {worst:e}"))?;
    Ok(format!("max deviation {worst:.1e}"))
}

fn forward_variance(ex: &TrainSample) -> Result<String, String> {
    let sched = NoiseSchedule::default();
    let n = 20_000usize;
    let idx = 0;
    let mut out = Vec::new();
    let mut r = rng(6);
    for t in [1, 500, 1000] {
        let mean = sched.alpha_bar(t).sqrt() * ex.x0.data[idx];
        let draws: Vec<f64> = (0..n)
            .map(|_| {
                let eps = sample_noise(&ex.x0, &mut r);
                add_noise(&ex.x0, t, &eps, &sched).map(|x| x.data[idx] - mean)
            })
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let m = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        let want = 1.0 - sched.alpha_bar(t);
        let sigma = want * (2.0 / (n - 1) as f64).sqrt();
        ensure((var - want).abs() < 3.0 * sigma, || format!("t {t}: variance {var} vs {want} (sigma {sigma:e})"))?;
        out.push(format!("t={t} {:.2}σ", (var - want).abs() / sigma));
    }
    Ok(out.join(" "))
}

fn drop_rates() -> Result<String, String> {
    let rates = DropoutRates::default();
    let mut r = rng(7);
    let n = 10_000;
    let (mut g, mut c, mut i) = (0usize, 0usize, 0usize);
    for _ in 0..n {
        let d = draw_dropout(&rates, &mut r);
        g += d.drop_graph as usize;
        c += d.drop_category as usize;
        i += d.drop_image as usize;
    }
    let f = |k: usize| k as f64 / n as f64;
    let (fg, fc, fi) = (f(g), f(c), f(i));
    ensure((fg - 0.5).abs() <= 0.03 && (fc - 0.5).abs() <= 0.03 && (fi - 0.1).abs() <= 0.02, || {
        format!("graph {fg} category {fc} image {fi}")
    })?;
    Ok(format!("graph {fg:.3} category {fc:.3} image {fi:.3}"))
}

fn foreground_cases() -> Result<String, String> {
    let uniform = AttentionRecord {
        layers: vec![vec![vec![1.0 / N_PATCHES as f32; N_PATCHES]; MAX_PARTS]; 3],
    };
    let cases = [
        ("all-foreground", ForegroundMask(vec![true; N_PATCHES]), 0.0),
        ("all-background", ForegroundMask(vec![false; N_PATCHES]), 2.0),
        ("uniform-half", ForegroundMask((0..N_PATCHES).map(|i| i < N_PATCHES / 2).collect()), 1.0),
    ];
    for (name, mask, want) in cases {
        let l = foreground_loss(&uniform, &mask, 1);
        ensure(l == want, || format!("{name}: {l} != {want}"))?;
    }
    Ok("0 / 2 / 1".into())
}

fn diffusion_mechanisms() -> Check {
    let model = perturbed_model(11)?;
    let rec = synth_object("StorageFurniture", 3);
    let ex = conditioned(&rec, &CameraSpec::default())?;
    let parts = [
        ("(a)", graph_mask_zero(&model, &ex, &rec.object.graph())),
        ("(b)", cfg_collapse(&model, &ex)),
        ("(c)", forward_variance(&ex)),
        ("(d)", drop_rates()),
        ("(e)", foreground_cases()),
    ];
    let mut ok = true;
    let text: Vec<String> = parts
        .into_iter()
        .map(|(k, r)| match r {
            Ok(s) => format!("{k} {s}"),
            Err(s) => {
                ok = false;
                format!("{k} FAILED {s}")
            }
        })
        .collect();
    let text = text.join("; ");
    if ok {
        Ok(text)
    } else {
        Err(text)
    }
}

// ---------------------------------------------------------------------------
// Toy training

const TIME_BUDGET: Duration = Duration::from_secs(30 * 60);

fn toy_training(checkpoint: &Path) -> Check {
    let start = Instant::now();
    let data: Vec<TrainSample> = synth_dataset(50, 1, &["StorageFurniture"])
        .iter()
        .enumerate()
        .map(|(i, r)| conditioned(r, &sample_camera(i as u64)))
        .collect::<Result<_, _>>()?;
    let cfg = TrainConfig {
        lr_base: 1e-3,
        lr_ica: 1e-3,
        warmup_epochs: 1,
        final_lr: 1e-4,
        epochs: 10,
        batch_size: 10,
        timesteps_per_object: 4,
        ..Default::default()
    };
    let model = Denoiser::new(DenoiserConfig::toy(SYNTH_DIM), 0).map_err(|e| e.to_string())?;
    let mut tr = Trainer::new(model, cfg.clone(), data.len().div_ceil(cfg.batch_size)).map_err(|e| e.to_string())?;
    let initial = tr.eval_loss(&data, 4, 7).map_err(|e| e.to_string())?;
    for _ in 0..cfg.epochs {
        tr.epoch::<std::io::Sink>(&data, None).map_err(|e| e.to_string())?;
    }
    let last = tr.eval_loss(&data, 4, 7).map_err(|e| e.to_string())?;
    save_checkpoint(tr.model(), checkpoint).map_err(|e| e.to_string())?;
    let ratio = last / initial;
    let secs = start.elapsed().as_secs_f64();
    ensure(ratio < 0.5, || format!("eval loss {initial:.4} -> {last:.4}, ratio {ratio:.3}"))?;
    Ok(format!("50 cabinets, {} epochs: eval loss {initial:.4} -> {last:.4} (ratio {ratio:.3}), {secs:.0}s", cfg.epochs))
}

const OVERFIT_STEPS: usize = 800;
const OVERFIT_TIMESTEPS: usize = 16;
const OVERFIT_LR: f64 = 3e-3;

fn overfit(elapsed: Duration) -> Check {
    let start = Instant::now();
    let rec = synth_object("StorageFurniture", 3);
    let cam = CameraSpec {
        azimuth: 20.0,
        elevation: 20.0,
        ..Default::default()
    };
    let ex = conditioned(&rec, &cam)?;
    let g = rec.object.graph();
    let cfg = TrainConfig {
        lr_base: OVERFIT_LR,
        lr_ica: OVERFIT_LR,
        warmup_epochs: 0,
        final_lr: OVERFIT_LR * 0.05,
        epochs: OVERFIT_STEPS,
        batch_size: 1,
        timesteps_per_object: OVERFIT_TIMESTEPS,
        ..Default::default()
    };
    let data = vec![ex.clone()];
    let model = Denoiser::new(DenoiserConfig::toy(SYNTH_DIM), 0).map_err(|e| e.to_string())?;
    let mut tr = Trainer::new(model, cfg, 1).map_err(|e| e.to_string())?;
    for _ in 0..OVERFIT_STEPS {
        tr.training_step(&data).map_err(|e| e.to_string())?;
    }
    let model = tr.model();
    let sched = model.config().schedule().map_err(|e| e.to_string())?;
    let truth = EvalObject::abstraction_only(rec.object.clone());
    let mut ds = (0..5u64)
        .map(|seed| {
            let x = sample(model, &ex.cond, &SamplerConfig { omega: 0.5, steps: 0, seed }, &sched, &[])
                .map_err(|e| e.to_string())?;
            let mut gen = decode_attributes(&x, &g).map_err(|e| e.to_string())?;
            for (part, (_, label)) in gen.parts.iter_mut().zip(&g.nodes) {
                part.label = *label;
            }
            eval_d(&EvalObject::abstraction_only(gen), &truth, DistanceKind::Cdist, StateMode::Rs, &EvalConfig::default())
                .map_err(|e| e.to_string())
        })
        .collect::<Result<Vec<f64>, String>>()?;
    ds.sort_by(f64::total_cmp);
    let median = ds[2];
    let total = elapsed + start.elapsed();
    ensure(median < 0.05, || format!("median RS-cDist {median:.4} over {ds:?}"))?;
    ensure(total <= TIME_BUDGET, || format!("training took {:.0}s", total.as_secs_f64()))?;
    Ok(format!(
        "{OVERFIT_STEPS} steps: median RS-cDist {median:.4} over 5 seeds; both runs {:.0}s",
        total.as_secs_f64()
    ))
}

// ---------------------------------------------------------------------------
// Retrieval

fn retrieval_identity() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut recs = synth_dataset(6, 8, &CATEGORIES);
    for rec in &mut recs {
        write_box_meshes(rec, dir.path()).map_err(|e| e.to_string())?;
    }
    let lib = PartLibrary::new("acceptance", recs.clone()).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for rec in &recs {
        let asm = assemble(&rec.object, &lib, &RetrievalConfig::default()).map_err(|e| e.to_string())?;
        ensure(asm.candidate.id == rec.id && asm.candidate.as_cdist == 0.0, || {
            format!("{}: selected {} at AS-cDist {}", rec.id, asm.candidate.id, asm.candidate.as_cdist)
        })?;
        for (part, target) in asm.parts.iter().zip(&rec.object.parts) {
            let b = Aabb::from_points(part.mesh.vertices.iter()).ok_or("empty mesh")?;
            worst = worst.max((b.min - target.bbox.min).amax()).max((b.max - target.bbox.max).amax());
        }
    }
    ensure(worst < 1e-4, || format!("fitted box deviation {worst:e}"))?;
    Ok(format!("{} queries select themselves, fitted box deviation {worst:.1e}", recs.len()))
}

// ---------------------------------------------------------------------------
// Graph topology

fn random_tree(r: &mut ChaCha8Rng, n: usize) -> Vec<GraphNode> {
    (0..n)
        .map(|k| GraphNode {
            id: k as PartId,
            label: if k == 0 { SemanticLabel::Base } else { SemanticLabel::ALL[r.random_range(0..SemanticLabel::ALL.len())] },
            parent: (k > 0).then(|| r.random_range(0..k) as PartId),
        })
        .collect()
}

/// The same tree under fresh ids and a shuffled node order.
fn relabeled(r: &mut ChaCha8Rng, nodes: &[GraphNode]) -> Vec<GraphNode> {
    let mut ids: Vec<PartId> = (0..nodes.len() as PartId).map(|i| i * 3 + 7).collect();
    ids.shuffle(r);
    let mut out: Vec<GraphNode> = nodes
        .iter()
        .map(|n| GraphNode {
            id: ids[n.id as usize],
            label: n.label,
            parent: n.parent.map(|p| ids[p as usize]),
        })
        .collect();
    out.shuffle(r);
    out
}

type Candidates<'a> = dyn Fn(PartId, &BTreeMap<PartId, PartId>, &BTreeSet<PartId>) -> Vec<PartId> + 'a;

/// Exhaustive search for a label- and parent-preserving bijection.
fn isomorphic(a: &ConnectivityGraph, b: &ConnectivityGraph) -> bool {
    if a.nodes.len() != b.nodes.len() {
        return false;
    }
    let root = |g: &ConnectivityGraph| g.nodes.iter().map(|n| n.0).find(|id| !g.parent_of.contains_key(id));
    let (Some(ra), Some(rb)) = (root(a), root(b)) else {
        return false;
    };
    let label = |g: &ConnectivityGraph, id: PartId| g.nodes.iter().find(|n| n.0 == id).map(|n| n.1);
    let children = |g: &ConnectivityGraph, id: PartId| -> Vec<PartId> {
        g.parent_of.iter().filter(|(_, p)| **p == id).map(|(c, _)| *c).collect()
    };
    // parents precede children
    let mut order = Vec::new();
    let mut queue = VecDeque::from([ra]);
    while let Some(id) = queue.pop_front() {
        order.push(id);
        queue.extend(children(a, id));
    }
    fn extend(
        k: usize,
        order: &[PartId],
        map: &mut BTreeMap<PartId, PartId>,
        used: &mut BTreeSet<PartId>,
        fits: &Candidates,
    ) -> bool {
        if k == order.len() {
            return true;
        }
        for cand in fits(order[k], map, used) {
            map.insert(order[k], cand);
            used.insert(cand);
            if extend(k + 1, order, map, used, fits) {
                return true;
            }
            map.remove(&order[k]);
            used.remove(&cand);
        }
        false
    }
    let fits = |x: PartId, map: &BTreeMap<PartId, PartId>, used: &BTreeSet<PartId>| -> Vec<PartId> {
        let pool = match a.parent_of.get(&x) {
            None => vec![rb],
            Some(p) => children(b, map[p]),
        };
        pool.into_iter()
            .filter(|y| !used.contains(y) && label(a, x) == label(b, *y) && children(a, x).len() == children(b, *y).len())
            .collect()
    };
    extend(0, &order, &mut BTreeMap::new(), &mut BTreeSet::new(), &fits)
}

fn graph_oracle() -> Check {
    let mut r = rng(9);
    let (mut iso, mut non) = (0, 0);
    for case in 0..200 {
        let n = r.random_range(1..=10);
        let a = random_tree(&mut r, n);
        let b = if case % 2 == 0 {
            relabeled(&mut r, &a)
        } else {
            // same size and label multiset, fresh shape
            let mut b = random_tree(&mut r, n);
            let mut labels: Vec<SemanticLabel> = a[1..].iter().map(|x| x.label).collect();
            labels.shuffle(&mut r);
            for (node, l) in b[1..].iter_mut().zip(labels) {
                node.label = l;
            }
            relabeled(&mut r, &b)
        };
        let (ga, gb) = (ConnectivityGraph::from_nodes(a), ConnectivityGraph::from_nodes(b));
        let want = isomorphic(&ga, &gb);
        let got = canonical_form(&ga) == canonical_form(&gb);
        let acc = graph_topology_accuracy(&ga, &gb);
        ensure(got == want && acc == want as u8, || format!("case {case}: canonical {got}, accuracy {acc}, search {want}"))?;
        if want {
            iso += 1;
        } else {
            non += 1;
        }
    }
    Ok(format!("200 tree pairs agree ({iso} isomorphic, {non} not)"))
}

// ---------------------------------------------------------------------------
// Service

async fn generate_bodies(checkpoint: &Path, assets: &Path, req: &Value) -> Result<(String, String), String> {
    let cfg = ServiceConfig {
        checkpoint: Some(checkpoint.to_path_buf()),
        assets_dir: assets.to_path_buf(),
        ..Default::default()
    };
    let state = Arc::new(AppState::new(cfg).map_err(|e| e.to_string())?);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.map_err(|e| e.to_string())?;
    let url = format!("http://{}/v1/generate", listener.local_addr().map_err(|e| e.to_string())?);
    let server = tokio::spawn(async move { axum::serve(listener, router(state)).await });
    let http = reqwest::Client::new();
    let mut bodies = Vec::new();
    for _ in 0..2 {
        let resp = http.post(&url).json(req).send().await.map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let text = resp.text().await.map_err(|e| e.to_string())?;
        ensure(status == 200, || format!("status {status}: {text}"))?;
        bodies.push(text);
    }
    server.abort();
    let second = bodies.pop().expect("two responses");
    Ok((bodies.pop().expect("two responses"), second))
}

fn service_determinism(checkpoint: &Path) -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let rec = synth_object("StorageFurniture", 6);
    let g = rec.object.graph();
    let object: Value = serde_json::from_str(&object_to_json(&rec)).map_err(|e| e.to_string())?;
    let bbox = [0.12, -0.3, 0.05, 0.2, 0.25, 0.1];
    let axis = [0.0, 0.1, -0.2, 0.0, 0.0, 1.0];
    let req = json!({
        "features": {"synthetic": {"object": object}},
        "graph": g,
        "category": "StorageFurniture",
        "num_samples": 2,
        "seed": 21,
        "pins": [
            {"part": g.nodes[1].0, "row": "bbox", "values": bbox},
            {"part": g.nodes[2].0, "row": "axis", "values": axis},
        ],
    });
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()
        .map_err(|e| e.to_string())?;
    let (a, b) = rt.block_on(generate_bodies(checkpoint, dir.path(), &req))?;
    let (c, _) = rt.block_on(generate_bodies(checkpoint, dir.path(), &req))?;
    ensure(a == b && a == c, || "responses differ".into())?;
    let v: Value = serde_json::from_str(&a).map_err(|e| e.to_string())?;
    let samples = v["samples"].as_array().ok_or("no samples")?;
    ensure(samples.len() == 2, || "sample count".into())?;
    for s in samples {
        let row = |p: usize, k: usize| -> Vec<f64> { serde_json::from_value(s["rows"][p][k].clone()).unwrap_or_default() };
        ensure(row(1, 0) == bbox && row(2, 1) == axis, || format!("pins not held: {:?} {:?}", row(1, 0), row(2, 1)))?;
    }
    Ok(format!("{} bytes identical across requests and restarts, pins exact", a.len()))
}

// ---------------------------------------------------------------------------
// Overlap ratio

/// Mean over sibling pairs of intersection volume over the smaller volume,
/// for axis-aligned boxes.
fn aor_oracle(obj: &ArticulatedAbstraction) -> f64 {
    let vol = |b: &Aabb| (0..3).map(|k| (b.max[k] - b.min[k]).max(0.0)).product::<f64>();
    let mut ratios = Vec::new();
    for (i, a) in obj.parts.iter().enumerate() {
        for b in &obj.parts[i + 1..] {
            if a.parent.is_some() && a.parent == b.parent {
                let clip = Aabb::new(a.bbox.min.sup(&b.bbox.min), a.bbox.max.inf(&b.bbox.max));
                ratios.push(vol(&clip) / vol(&a.bbox).min(vol(&b.bbox)));
            }
        }
    }
    if ratios.is_empty() {
        0.0
    } else {
        ratios.iter().sum::<f64>() / ratios.len() as f64
    }
}

fn aor_bounds() -> Check {
    let mut r = rng(10);
    let mut worst = 0.0f64;
    for i in 0..200 {
        let mut obj = synth_object(CATEGORIES[i % CATEGORIES.len()], 1000 + i as u64).object;
        for p in &mut obj.parts {
            let c = p.bbox.center() + Vec3::new(r.random_range(-0.2..0.2), r.random_range(-0.2..0.2), r.random_range(-0.2..0.2));
            let h = p.bbox.half_extent() * r.random_range(0.5..2.0);
            p.bbox = Aabb::from_center_half(c, h);
        }
        let rest = aor(&obj).map_err(|e| e.to_string())?;
        ensure((0.0..=1.0).contains(&rest), || format!("object {i}: AOR {rest}"))?;
        worst = worst.max((rest - aor_oracle(&obj)).abs());
        let moved = aor_at(&obj, &ArticulationState::uniform(&obj, r.random_range(0.0..=1.0))).map_err(|e| e.to_string())?;
        ensure((0.0..=1.0).contains(&moved), || format!("object {i}: articulated AOR {moved}"))?;
    }
    ensure(worst < 1e-9, || format!("resting AOR deviates from clipping by {worst:e}"))?;

    let part = |id: PartId, parent: Option<PartId>, label, bbox| PartAbstraction {
        id,
        label,
        bbox,
        joint: if parent.is_some() {
            Joint::prismatic(Vec3::zeros(), Vec3::x(), [0.0, 0.5])
        } else {
            Joint::fixed()
        },
        parent,
    };
    let half = ArticulatedAbstraction::new(vec![
        part(0, None, SemanticLabel::Base, Aabb::cube(-3.0, -2.0)),
        part(1, Some(0), SemanticLabel::Drawer, Aabb::cube(0.0, 1.0)),
        part(2, Some(0), SemanticLabel::Drawer, Aabb::new(Vec3::new(0.5, 0.0, 0.0), Vec3::new(1.5, 1.0, 1.0))),
    ]);
    let oracle = aor_oracle(&half);
    let got = aor(&half).map_err(|e| e.to_string())?;
    ensure((oracle - 0.5).abs() < 1e-9 && (got - 0.5).abs() < 1e-9, || format!("half overlap: {got}, clipping {oracle}"))?;
    Ok(format!("200 objects in [0,1], resting deviation {worst:.1e}; half overlap {got}"))
}

// ---------------------------------------------------------------------------

fn main() {
    let started = Instant::now();
    let scratch = tempfile::tempdir().expect("temporary directory");
    let checkpoint = scratch.path().join("toy.safetensors");
    let mut failures = 0;
    let mut report = |name: &str, f: &mut dyn FnMut() -> Check| {
        let t = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = t.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failures += 1;
                println!("FAIL {name}: {detail} [{secs:.1}s]");
            }
        }
    };
    report("hungarian-oracle", &mut hungarian_oracle);
    report("eval-identities", &mut eval_identities);
    report("giou-hand-case", &mut giou_checks);
    report("fk-invariants", &mut fk_invariants);
    report("encoding-round-trip", &mut encoding_round_trip);
    report("diffusion-mechanisms", &mut diffusion_mechanisms);
    let train_start = Instant::now();
    report("toy-training-loss", &mut || toy_training(&checkpoint));
    let train_time = train_start.elapsed();
    report("toy-training-overfit", &mut || overfit(train_time));
    report("retrieval-identity", &mut retrieval_identity);
    report("graph-accuracy-oracle", &mut graph_oracle);
    report("service-determinism", &mut || {
        if !checkpoint.exists() {
            save_checkpoint(&perturbed_model(12)?, &checkpoint).map_err(|e| e.to_string())?;
        }
        service_determinism(&checkpoint)
    });
    report("aor-bounds", &mut aor_bounds);
    println!("{} failed, {:.0}s total", failures, started.elapsed().as_secs_f64());
    if failures > 0 {
        std::process::exit(1);
    }
}
