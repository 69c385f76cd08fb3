//! Triangle soups: loading (STL, OBJ), OBJ export, primitives and
//! area-weighted surface sampling.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::kinematics::{Aabb, RigidTransform, Vec3};

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("failed to read mesh {path}: {reason}")]
    Read { path: String, reason: String },
    #[error("unsupported mesh format `{0}` (expected .stl or .obj)")]
    UnsupportedFormat(String),
    #[error("mesh has no triangles")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[u32; 3]>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>) -> Self {
        TriMesh { vertices, faces }
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn aabb(&self) -> Option<Aabb> {
        Aabb::from_points(self.vertices.iter())
    }

    pub fn triangle(&self, f: usize) -> [Vec3; 3] {
        self.faces[f].map(|i| self.vertices[i as usize])
    }

    pub fn area(&self) -> f64 {
        (0..self.faces.len()).map(|f| tri_area(&self.triangle(f))).sum()
    }

    pub fn transformed(&self, t: &RigidTransform) -> TriMesh {
        TriMesh {
            vertices: self.vertices.iter().map(|v| t.apply(v)).collect(),
            faces: self.faces.clone(),
        }
    }

    /// `v -> scale ⊙ v + translation`
    pub fn scaled(&self, scale: &Vec3, translation: &Vec3) -> TriMesh {
        TriMesh {
            vertices: self
                .vertices
                .iter()
                .map(|v| v.component_mul(scale) + translation)
                .collect(),
            faces: self.faces.clone(),
        }
    }

    /// Area-weighted uniform samples on the surface. Deterministic per seed.
    pub fn sample_surface(&self, n: usize, seed: u64) -> Result<Vec<Vec3>, MeshError> {
        let mut cdf = Vec::with_capacity(self.faces.len());
        let mut acc = 0.0;
        for f in 0..self.faces.len() {
            acc += tri_area(&self.triangle(f));
            cdf.push(acc);
        }
        if self.faces.is_empty() || !(acc > 0.0) {
            return Err(MeshError::Empty);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..n)
            .map(|_| {
                let r: f64 = rng.random::<f64>() * acc;
                let f = cdf.partition_point(|&c| c < r).min(cdf.len() - 1);
                let [a, b, c] = self.triangle(f);
                let (u, v): (f64, f64) = (rng.random(), rng.random());
                let su = u.sqrt();
                a * (1.0 - su) + b * (su * (1.0 - v)) + c * (su * v)
            })
            .collect())
    }

    pub fn merge(&mut self, other: &TriMesh) {
        let off = self.vertices.len() as u32;
        self.vertices.extend_from_slice(&other.vertices);
        self.faces
            .extend(other.faces.iter().map(|f| f.map(|i| i + off)));
    }

    pub fn load(path: &Path) -> Result<TriMesh, MeshError> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .unwrap_or_default();
        let err = |reason: String| MeshError::Read {
            path: path.display().to_string(),
            reason,
        };
        let mesh = match ext.as_str() {
            "stl" => {
                let mut file = std::fs::File::open(path).map_err(|e| err(e.to_string()))?;
                let stl = stl_io::read_stl(&mut file).map_err(|e| err(e.to_string()))?;
                TriMesh {
                    vertices: stl
                        .vertices
                        .iter()
                        .map(|v| Vec3::new(v[0] as f64, v[1] as f64, v[2] as f64))
                        .collect(),
                    faces: stl
                        .faces
                        .iter()
                        .map(|f| f.vertices.map(|i| i as u32))
                        .collect(),
                }
            }
            "obj" => {
                let opts = tobj::LoadOptions {
                    triangulate: true,
                    single_index: false,
                    ..Default::default()
                };
                let (models, _) = tobj::load_obj(path, &opts).map_err(|e| err(e.to_string()))?;
                let mut mesh = TriMesh::default();
                for m in models {
                    let verts = m
                        .mesh
                        .positions
                        .chunks_exact(3)
                        .map(|p| Vec3::new(p[0] as f64, p[1] as f64, p[2] as f64))
                        .collect();
                    let faces = m
                        .mesh
                        .indices
                        .chunks_exact(3)
                        .map(|f| [f[0], f[1], f[2]])
                        .collect();
                    mesh.merge(&TriMesh::new(verts, faces));
                }
                mesh
            }
            other => return Err(MeshError::UnsupportedFormat(other.to_string())),
        };
        if mesh.is_empty() {
            return Err(MeshError::Empty);
        }
        Ok(mesh)
    }

    pub fn to_obj_string(&self) -> String {
        let mut s = String::with_capacity(self.vertices.len() * 32 + self.faces.len() * 16);
        for v in &self.vertices {
            let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
        }
        for f in &self.faces {
            let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
        }
        s
    }

    /// Axis-aligned box spanning `[-0.5, 0.5]^3`.
    pub fn unit_box() -> TriMesh {
        let b = Aabb::cube(-0.5, 0.5);
        let c = b.corners();
        // corner index bits: x = 1, y = 2, z = 4
        let quads: [[u32; 4]; 6] = [
            [0, 2, 3, 1], // -z
            [4, 5, 7, 6], // +z
            [0, 1, 5, 4], // -y
            [2, 6, 7, 3], // +y
            [0, 4, 6, 2], // -x
            [1, 3, 7, 5], // +x
        ];
        let faces = quads
            .iter()
            .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
            .collect();
        TriMesh::new(c.to_vec(), faces)
    }

    /// Closed cylinder along x, radius 0.5, length 1, centered at the origin.
    pub fn cylinder(segments: usize) -> TriMesh {
        let mut v = vec![Vec3::new(-0.5, 0.0, 0.0), Vec3::new(0.5, 0.0, 0.0)];
        for i in 0..segments {
            let a = TAU * i as f64 / segments as f64;
            v.push(Vec3::new(-0.5, 0.5 * a.cos(), 0.5 * a.sin()));
            v.push(Vec3::new(0.5, 0.5 * a.cos(), 0.5 * a.sin()));
        }
        let mut f = Vec::new();
        for i in 0..segments as u32 {
            let j = (i + 1) % segments as u32;
            let (b0, t0, b1, t1) = (2 + 2 * i, 3 + 2 * i, 2 + 2 * j, 3 + 2 * j);
            f.push([0, b1, b0]);
            f.push([1, t0, t1]);
            f.push([b0, b1, t1]);
            f.push([b0, t1, t0]);
        }
        TriMesh::new(v, f)
    }

    /// Torus in the yz-plane, major radius 0.35, minor radius 0.15.
    pub fn torus(major: usize, minor: usize) -> TriMesh {
        let (rr, r) = (0.35, 0.15);
        let mut v = Vec::with_capacity(major * minor);
        for i in 0..major {
            let a = TAU * i as f64 / major as f64;
            for j in 0..minor {
                let b = TAU * j as f64 / minor as f64;
                let rad = rr + r * b.cos();
                v.push(Vec3::new(r * b.sin(), rad * a.cos(), rad * a.sin()));
            }
        }
        let idx = |i: usize, j: usize| ((i % major) * minor + (j % minor)) as u32;
        let mut f = Vec::with_capacity(2 * major * minor);
        for i in 0..major {
            for j in 0..minor {
                f.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
                f.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
            }
        }
        TriMesh::new(v, f)
    }
}

fn tri_area(t: &[Vec3; 3]) -> f64 {
    0.5 * (t[1] - t[0]).cross(&(t[2] - t[0])).norm()
}
