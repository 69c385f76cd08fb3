//! Procedural articulated furniture for tests, demos and hermetic training.
//!
//! Objects stand on z = 0 with their front face toward +x before
//! normalization.

use std::f64::consts::{FRAC_PI_2, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::aoj::{ObjectRecord, SourceMeta};
use super::CATEGORIES;
use crate::kinematics::{
    Aabb, ArticulatedAbstraction, Joint, JointType, PartAbstraction, PartId, SemanticLabel, Vec3,
};

const PANEL: f64 = 0.02;
const GAP: f64 = 0.01;

struct Builder {
    parts: Vec<PartAbstraction>,
    rng: ChaCha8Rng,
    /// Front face x coordinate.
    front: f64,
    depth: f64,
}

/// A rectangle on the front face: `(y0, y1, z0, z1)`.
type Cell = (f64, f64, f64, f64);

#[derive(Clone, Copy)]
enum Hinge {
    Left,
    Right,
    Bottom,
}

impl Builder {
    fn new(seed: u64, width: f64, depth: f64, height: f64) -> Self {
        let mut b = Builder {
            parts: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            front: depth / 2.0,
            depth,
        };
        b.add(
            SemanticLabel::Base,
            Aabb::new(
                Vec3::new(-depth / 2.0, -width / 2.0, 0.0),
                Vec3::new(depth / 2.0, width / 2.0, height),
            ),
            Joint::fixed(),
            None,
        );
        b
    }

    fn add(&mut self, label: SemanticLabel, bbox: Aabb, joint: Joint, parent: Option<PartId>) -> PartId {
        let id = self.parts.len() as PartId;
        self.parts.push(PartAbstraction {
            id,
            label,
            bbox,
            joint,
            parent,
        });
        id
    }

    fn shrink(c: Cell) -> Cell {
        (c.0 + GAP, c.1 - GAP, c.2 + GAP, c.3 - GAP)
    }

    fn drawer(&mut self, cell: Cell) -> PartId {
        let (y0, y1, z0, z1) = Self::shrink(cell);
        let inner = self.depth * self.rng.random_range(0.6..0.9);
        let travel = inner * self.rng.random_range(0.6..0.9);
        let id = self.add(
            SemanticLabel::Drawer,
            Aabb::new(
                Vec3::new(self.front - inner, y0, z0),
                Vec3::new(self.front + PANEL, y1, z1),
            ),
            Joint::prismatic(
                Vec3::new(self.front, (y0 + y1) / 2.0, (z0 + z1) / 2.0),
                Vec3::x(),
                [0.0, travel],
            ),
            Some(0),
        );
        let zc = z1 - (z1 - z0) * self.rng.random_range(0.25..0.5);
        self.grip(id, (y0 + y1) / 2.0, zc, (y1 - y0) * 0.4, true);
        id
    }

    fn door(&mut self, cell: Cell, hinge: Hinge) -> PartId {
        let (y0, y1, z0, z1) = Self::shrink(cell);
        let bbox = Aabb::new(
            Vec3::new(self.front, y0, z0),
            Vec3::new(self.front + PANEL, y1, z1),
        );
        let open = self.rng.random_range(0.75..1.0) * FRAC_PI_2 * 1.2;
        let (origin, dir) = match hinge {
            Hinge::Left => (Vec3::new(self.front, y0, (z0 + z1) / 2.0), -Vec3::z()),
            Hinge::Right => (Vec3::new(self.front, y1, (z0 + z1) / 2.0), Vec3::z()),
            Hinge::Bottom => (Vec3::new(self.front, (y0 + y1) / 2.0, z0), Vec3::y()),
        };
        let id = self.add(SemanticLabel::Door, bbox, Joint::revolute(origin, dir, [0.0, open]), Some(0));
        let (h, w) = (z1 - z0, y1 - y0);
        match hinge {
            Hinge::Left => self.grip(id, y1 - 0.12 * w, (z0 + z1) / 2.0, 0.35 * h, false),
            Hinge::Right => self.grip(id, y0 + 0.12 * w, (z0 + z1) / 2.0, 0.35 * h, false),
            Hinge::Bottom => self.grip(id, (y0 + y1) / 2.0, z1 - 0.1 * h, 0.5 * w, true),
        }
        id
    }

    /// A handle bar or, sometimes, a knob mounted on the front of `parent`.
    fn grip(&mut self, parent: PartId, yc: f64, zc: f64, length: f64, horizontal: bool) {
        let x0 = self.parts[parent as usize].bbox.max.x;
        if self.rng.random_bool(0.2) {
            let r = 0.02;
            self.add(
                SemanticLabel::Knob,
                Aabb::new(Vec3::new(x0, yc - r, zc - r), Vec3::new(x0 + 0.03, yc + r, zc + r)),
                Joint::fixed(),
                Some(parent),
            );
            return;
        }
        let t = 0.012;
        let (hy, hz) = if horizontal { (length / 2.0, t) } else { (t, length / 2.0) };
        self.add(
            SemanticLabel::Handle,
            Aabb::new(Vec3::new(x0, yc - hy, zc - hz), Vec3::new(x0 + 0.035, yc + hy, zc + hz)),
            Joint::fixed(),
            Some(parent),
        );
    }

    /// A rotating control knob on the base's front panel.
    fn control_knob(&mut self, yc: f64, zc: f64) {
        let r = 0.025;
        let origin = Vec3::new(self.front, yc, zc);
        let joint = match self.rng.random_range(0..3) {
            0 => Joint::new(JointType::Continuous, origin, Vec3::x(), [0.0, TAU]),
            1 => Joint::revolute(origin, Vec3::x(), [0.0, self.rng.random_range(1.5..4.5)]),
            _ => Joint::new(JointType::Screw, origin, Vec3::x(), [0.0, TAU]).with_pitch(0.002),
        };
        self.add(
            SemanticLabel::Knob,
            Aabb::new(Vec3::new(self.front, yc - r, zc - r), Vec3::new(self.front + 0.03, yc + r, zc + r)),
            joint,
            Some(0),
        );
    }

    /// A sliding tray inside the cavity behind the front panel.
    fn tray(&mut self, y0: f64, y1: f64, z: f64) {
        let inner = self.depth * 0.75;
        self.add(
            SemanticLabel::Tray,
            Aabb::new(
                Vec3::new(self.front - 0.05 - inner, y0 + 0.04, z),
                Vec3::new(self.front - 0.05, y1 - 0.04, z + 0.04),
            ),
            Joint::prismatic(Vec3::new(self.front, 0.0, z), Vec3::x(), [0.0, inner * 0.7]),
            Some(0),
        );
    }

    fn finish(self, id: String, category: &str) -> ObjectRecord {
        let mut obj = ArticulatedAbstraction::new(self.parts);
        obj.category = Some(category.to_string());
        let mut rec = ObjectRecord::new(id, obj);
        rec.source = SourceMeta {
            dataset: Some("synthetic".into()),
            object_id: Some(rec.id.clone()),
        };
        rec.renormalize().expect("generated objects have extent");
        rec
    }
}

fn split(lo: f64, hi: f64, n: usize) -> Vec<(f64, f64)> {
    let step = (hi - lo) / n as f64;
    (0..n).map(|i| (lo + step * i as f64, lo + step * (i + 1) as f64)).collect()
}

fn storage(seed: u64) -> Builder {
    let mut r = ChaCha8Rng::seed_from_u64(seed ^ 0x5707);
    let (w, d, h) = (r.random_range(0.6..1.4), r.random_range(0.4..0.6), r.random_range(0.6..1.6));
    let mut b = Builder::new(seed, w, d, h);
    let (rows, cols) = (r.random_range(1..=4usize), r.random_range(1..=2usize));
    let plinth = 0.05;
    for (z0, z1) in split(plinth, h - 0.03, rows) {
        let tall = (z1 - z0) > 0.35;
        for (ci, (y0, y1)) in split(-w / 2.0 + 0.02, w / 2.0 - 0.02, cols).into_iter().enumerate() {
            if tall && r.random_bool(0.7) {
                let hinge = if ci == 0 { Hinge::Left } else { Hinge::Right };
                b.door((y0, y1, z0, z1), hinge);
            } else {
                b.drawer((y0, y1, z0, z1));
            }
        }
    }
    b
}

fn table(seed: u64) -> Builder {
    let mut r = ChaCha8Rng::seed_from_u64(seed ^ 0x7AB1);
    let (w, d, h) = (r.random_range(1.0..1.6), r.random_range(0.6..0.9), r.random_range(0.7..0.8));
    let mut b = Builder::new(seed, w, d, h);
    let n = r.random_range(1..=3usize);
    for (y0, y1) in split(-w / 2.0 + 0.05, w / 2.0 - 0.05, n) {
        b.drawer((y0, y1, h - 0.17, h - 0.03));
    }
    b
}

fn refrigerator(seed: u64) -> Builder {
    let mut r = ChaCha8Rng::seed_from_u64(seed ^ 0xF71D);
    let (w, d, h) = (r.random_range(0.6..0.9), r.random_range(0.6..0.8), r.random_range(1.5..1.9));
    let mut b = Builder::new(seed, w, d, h);
    let hinge = if r.random_bool(0.5) { Hinge::Left } else { Hinge::Right };
    if r.random_bool(0.6) {
        let split_z = h * r.random_range(0.6..0.7);
        b.door((-w / 2.0, w / 2.0, 0.05, split_z), hinge);
        b.door((-w / 2.0, w / 2.0, split_z, h), hinge);
    } else {
        b.door((-w / 2.0, w / 2.0, 0.05, h), hinge);
    }
    if r.random_bool(0.5) {
        b.tray(-w / 2.0, w / 2.0, 0.2);
    }
    b
}

fn bottom_door_appliance(seed: u64, trays: usize, w: f64, h: f64) -> Builder {
    let mut r = ChaCha8Rng::seed_from_u64(seed ^ 0x0BE4);
    let d = r.random_range(0.55..0.65);
    let mut b = Builder::new(seed, w, d, h);
    let panel = 0.12;
    b.door((-w / 2.0, w / 2.0, 0.05, h - panel), Hinge::Bottom);
    for (i, (z0, _)) in split(0.15, h - panel - 0.1, trays).into_iter().enumerate() {
        b.tray(-w / 2.0, w / 2.0, z0 + 0.02 * i as f64);
    }
    let knobs = r.random_range(1..=4usize);
    for (y0, y1) in split(-w / 2.0 + 0.05, w / 2.0 - 0.05, knobs) {
        b.control_knob((y0 + y1) / 2.0, h - panel / 2.0);
    }
    b
}

fn washer(seed: u64) -> Builder {
    let mut r = ChaCha8Rng::seed_from_u64(seed ^ 0x3A5E);
    let (w, d, h) = (r.random_range(0.55..0.65), r.random_range(0.55..0.65), r.random_range(0.8..0.9));
    let mut b = Builder::new(seed, w, d, h);
    let panel = 0.15;
    b.door((-w / 2.0 + 0.05, w / 2.0 - 0.05, 0.15, h - panel - 0.05), Hinge::Left);
    if r.random_bool(0.5) {
        b.drawer((-w / 2.0, 0.0, h - panel, h));
        b.control_knob(w / 4.0, h - panel / 2.0);
    } else {
        b.control_knob(0.0, h - panel / 2.0);
    }
    b
}

fn microwave(seed: u64) -> Builder {
    let mut r = ChaCha8Rng::seed_from_u64(seed ^ 0x3C60);
    let (w, d, h) = (r.random_range(0.45..0.6), r.random_range(0.3..0.4), r.random_range(0.25..0.35));
    let mut b = Builder::new(seed, w, d, h);
    let split_y = w / 2.0 - w * 0.25;
    b.door((-w / 2.0, split_y, 0.0, h), Hinge::Left);
    let knobs = r.random_range(1..=2usize);
    for (z0, z1) in split(0.05, h - 0.05, knobs) {
        b.control_knob((split_y + w / 2.0) / 2.0, (z0 + z1) / 2.0);
    }
    b
}

/// One procedural object of `category` (one of [`CATEGORIES`]).
pub fn synth_object(category: &str, seed: u64) -> ObjectRecord {
    let id = format!("{}-{seed:06}", category.to_ascii_lowercase());
    let b = match category {
        "Table" => table(seed),
        "Refrigerator" => refrigerator(seed),
        "Dishwasher" => bottom_door_appliance(seed, 2, 0.6, 0.85),
        "Oven" => bottom_door_appliance(seed, 1, 0.6, 0.9),
        "Washer" => washer(seed),
        "Microwave" => microwave(seed),
        _ => storage(seed),
    };
    b.finish(id, category)
}

/// `n` objects cycling through `categories` (all categories when empty),
/// with per-object seeds derived from `seed`.
pub fn synth_dataset(n: usize, seed: u64, categories: &[&str]) -> Vec<ObjectRecord> {
    let cats: Vec<&str> = if categories.is_empty() {
        CATEGORIES.to_vec()
    } else {
        categories.to_vec()
    };
    (0..n)
        .map(|i| synth_object(cats[i % cats.len()], seed.wrapping_mul(1_000_003).wrapping_add(i as u64)))
        .collect()
}
