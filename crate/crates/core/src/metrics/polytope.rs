//! Convex polytopes as outward-oriented face loops, clipped by half-spaces.

use nalgebra::Matrix3;

use crate::kinematics::Vec3;

const PLANE_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct ConvexPolytope {
    faces: Vec<Vec<Vec3>>,
}

impl ConvexPolytope {
    /// Box with the given center, orientation (columns are the local axes)
    /// and half extents.
    pub fn oriented_box(center: &Vec3, axes: &Matrix3<f64>, half: &Vec3) -> Self {
        let corner = |s: [f64; 3]| {
            center
                + axes.column(0) * (s[0] * half[0])
                + axes.column(1) * (s[1] * half[1])
                + axes.column(2) * (s[2] * half[2])
        };
        let mut faces = Vec::with_capacity(6);
        for a in 0..3 {
            let (u, v) = ((a + 1) % 3, (a + 2) % 3);
            for sign in [1.0, -1.0] {
                // counter-clockwise around +axis_a since axis_u x axis_v = axis_a
                let mut loop_ = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]
                    .map(|(su, sv)| {
                        let mut s = [0.0; 3];
                        s[a] = sign;
                        s[u] = su;
                        s[v] = sv;
                        corner(s)
                    })
                    .to_vec();
                if sign < 0.0 {
                    loop_.reverse();
                }
                faces.push(loop_);
            }
        }
        ConvexPolytope { faces }
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    /// Keeps the part with `normal · x <= offset`.
    pub fn clip(&self, normal: &Vec3, offset: f64) -> ConvexPolytope {
        let scale = 1.0 + offset.abs();
        let eps = PLANE_EPS * scale;
        let dist = |p: &Vec3| normal.dot(p) - offset;
        let any_outside = self.faces.iter().flatten().any(|p| dist(p) > eps);
        if !any_outside {
            return self.clone();
        }
        let mut faces = Vec::with_capacity(self.faces.len() + 1);
        let mut cap: Vec<Vec3> = Vec::new();
        for face in &self.faces {
            if face.iter().all(|p| dist(p).abs() <= eps) {
                continue;
            }
            let mut out = Vec::with_capacity(face.len() + 2);
            for (idx, p) in face.iter().enumerate() {
                let q = &face[(idx + 1) % face.len()];
                let (dp, dq) = (dist(p), dist(q));
                let p_in = dp <= eps;
                if p_in {
                    out.push(*p);
                    if dp.abs() <= eps {
                        cap.push(*p);
                    }
                }
                if (dp > eps && dq < -eps) || (dp < -eps && dq > eps) {
                    let t = dp / (dp - dq);
                    let x = p + (q - p) * t;
                    out.push(x);
                    cap.push(x);
                }
            }
            dedup_loop(&mut out, eps);
            if out.len() >= 3 {
                faces.push(out);
            }
        }
        if faces.is_empty() {
            return ConvexPolytope { faces };
        }
        let cap = order_cap(cap, normal, eps);
        if cap.len() >= 3 {
            faces.push(cap);
        }
        ConvexPolytope { faces }
    }

    pub fn volume(&self) -> f64 {
        let verts: Vec<&Vec3> = self.faces.iter().flatten().collect();
        if verts.is_empty() {
            return 0.0;
        }
        let p0 = verts.iter().fold(Vec3::zeros(), |a, p| a + *p) / verts.len() as f64;
        let mut vol = 0.0;
        for f in &self.faces {
            let a = f[0] - p0;
            for w in f[1..].windows(2) {
                vol += a.dot(&(w[0] - p0).cross(&(w[1] - p0)));
            }
        }
        (vol / 6.0).max(0.0)
    }
}

fn dedup_loop(pts: &mut Vec<Vec3>, eps: f64) {
    pts.dedup_by(|a, b| (*a - *b).norm() <= eps);
    while pts.len() > 1 && (pts[0] - pts[pts.len() - 1]).norm() <= eps {
        pts.pop();
    }
}

/// Unique on-plane points ordered counter-clockwise around `normal`.
fn order_cap(points: Vec<Vec3>, normal: &Vec3, eps: f64) -> Vec<Vec3> {
    let mut uniq: Vec<Vec3> = Vec::with_capacity(points.len());
    for p in points {
        if !uniq.iter().any(|q| (q - p).norm() <= eps * 10.0) {
            uniq.push(p);
        }
    }
    if uniq.len() < 3 {
        return uniq;
    }
    let n = normal.normalize();
    let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let u = n.cross(&helper).normalize();
    let w = n.cross(&u);
    let c = uniq.iter().fold(Vec3::zeros(), |a, p| a + p) / uniq.len() as f64;
    let mut keyed: Vec<(f64, Vec3)> = uniq
        .into_iter()
        .map(|p| {
            let d = p - c;
            (w.dot(&d).atan2(u.dot(&d)), p)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
    keyed.into_iter().map(|(_, p)| p).collect()
}
