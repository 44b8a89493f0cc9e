//! Triangle meshes and marching-cubes isosurface extraction.

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::field::CornerField;
use super::tables::{EDGE_TABLE, TRIANGLE_TABLE};
use crate::error::{input, param, Result};
use crate::geometry::Points;
use crate::ply;

/// Triangles at or below this area (m^2) are dropped.
pub const DEGENERATE_AREA: f64 = 1e-12;

const CORNERS: [[usize; 3]; 8] =
    [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0], [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]];
const EDGES: [[usize; 2]; 12] =
    [[0, 1], [1, 2], [2, 3], [3, 0], [4, 5], [5, 6], [6, 7], [7, 4], [0, 4], [1, 5], [2, 6], [3, 7]];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[u32; 3]>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeshStatus {
    Ok,
    /// The level set does not cross the field.
    Empty,
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn norm(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

impl Mesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle_area(&self, t: &[u32; 3]) -> f64 {
        let [a, b, c] = t.map(|i| self.vertices[i as usize]);
        0.5 * norm(cross(sub(b, a), sub(c, a)))
    }

    pub fn area(&self) -> f64 {
        self.triangles.iter().map(|t| self.triangle_area(t)).sum()
    }

    fn edge_counts(&self) -> HashMap<(u32, u32), usize> {
        let mut edges = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        edges
    }

    /// `V - E + F` over referenced vertices.
    pub fn euler_characteristic(&self) -> i64 {
        let mut used = vec![false; self.vertices.len()];
        for t in &self.triangles {
            for &i in t {
                used[i as usize] = true;
            }
        }
        let v = used.iter().filter(|&&u| u).count() as i64;
        v - self.edge_counts().len() as i64 + self.triangles.len() as i64
    }

    /// Every edge is shared by exactly two triangles.
    pub fn is_closed(&self) -> bool {
        !self.is_empty() && self.edge_counts().values().all(|&c| c == 2)
    }

    pub fn translated(&self, offset: [f64; 3]) -> Mesh {
        Mesh {
            vertices: self.vertices.iter().map(|v| [v[0] + offset[0], v[1] + offset[1], v[2] + offset[2]]).collect(),
            triangles: self.triangles.clone(),
        }
    }

    /// Area-weighted uniform samples on the triangles.
    pub fn sample_surface(&self, count: usize, seed: u64) -> Result<Points> {
        if self.is_empty() {
            return input("cannot sample an empty mesh");
        }
        let mut cdf = Vec::with_capacity(self.triangles.len());
        let mut acc = 0.0;
        for t in &self.triangles {
            acc += self.triangle_area(t);
            cdf.push(acc);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Points::with_capacity(3, count);
        for _ in 0..count {
            let u = rng.random::<f64>() * acc;
            let ti = cdf.partition_point(|&c| c < u).min(cdf.len() - 1);
            let [a, b, c] = self.triangles[ti].map(|i| self.vertices[i as usize]);
            let (mut r1, mut r2) = (rng.random::<f64>(), rng.random::<f64>());
            if r1 + r2 > 1.0 {
                r1 = 1.0 - r1;
                r2 = 1.0 - r2;
            }
            let p: [f64; 3] = std::array::from_fn(|k| a[k] + r1 * (b[k] - a[k]) + r2 * (c[k] - a[k]));
            out.push(&p);
        }
        Ok(out)
    }

    /// Binary little-endian PLY with float vertices and triangle faces.
    pub fn write_ply(&self, path: &Path) -> Result<()> {
        ply::write_mesh(path, &self.vertices, &self.triangles, &[])
    }

    /// As [`Mesh::write_ply`], with one header comment per entry.
    pub fn write_ply_with_comments(&self, path: &Path, comments: &[&str]) -> Result<()> {
        ply::write_mesh(path, &self.vertices, &self.triangles, comments)
    }

    pub fn read_ply(path: &Path) -> Result<Mesh> {
        let (vertices, triangles) = ply::read_mesh(path)?;
        if triangles.iter().flatten().any(|&i| i as usize >= vertices.len()) {
            return input("mesh face references a missing vertex");
        }
        Ok(Mesh { vertices, triangles })
    }
}

/// Marching cubes at `level`; vertices are shared between cubes through their grid edge.
///
/// Triangle normals (right-hand rule) point towards the side where the field is below `level`.
pub fn extract_mesh(field: &CornerField, level: f64) -> Result<(Mesh, MeshStatus)> {
    if !level.is_finite() {
        return param("isosurface level must be finite");
    }
    let [nx, ny, nz] = field.dims;
    let node_id = |i: usize, j: usize, k: usize| (k * ny + j) * nx + i;
    let mut mesh = Mesh::default();
    let mut cache: HashMap<usize, u32> = HashMap::new();
    for k in 0..nz - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let mut case = 0usize;
                let mut vals = [0.0; 8];
                for (c, o) in CORNERS.iter().enumerate() {
                    vals[c] = field.value(i + o[0], j + o[1], k + o[2]);
                    if vals[c] < level {
                        case |= 1 << c;
                    }
                }
                let crossed = EDGE_TABLE[case];
                if crossed == 0 {
                    continue;
                }
                let mut edge_vertex = [u32::MAX; 12];
                for (e, &[a, b]) in EDGES.iter().enumerate() {
                    if crossed & (1 << e) == 0 {
                        continue;
                    }
                    // Orient every edge from its lower node so shared vertices agree.
                    let (lo, hi) = if CORNERS[a] <= CORNERS[b] { (a, b) } else { (b, a) };
                    let (ol, oh) = (CORNERS[lo], CORNERS[hi]);
                    let axis = (0..3).find(|&d| ol[d] != oh[d]).unwrap();
                    let key = node_id(i + ol[0], j + ol[1], k + ol[2]) * 3 + axis;
                    edge_vertex[e] = *cache.entry(key).or_insert_with(|| {
                        let p0 = field.node(i + ol[0], j + ol[1], k + ol[2]);
                        let p1 = field.node(i + oh[0], j + oh[1], k + oh[2]);
                        let (v0, v1) = (vals[lo], vals[hi]);
                        let t = if v1 != v0 { ((level - v0) / (v1 - v0)).clamp(0.0, 1.0) } else { 0.5 };
                        let mut p = p0;
                        p[axis] = p0[axis] + t * (p1[axis] - p0[axis]);
                        mesh.vertices.push(p);
                        (mesh.vertices.len() - 1) as u32
                    });
                }
                for tri in TRIANGLE_TABLE[case].chunks_exact(3) {
                    if tri[0] < 0 {
                        break;
                    }
                    let t = [edge_vertex[tri[0] as usize], edge_vertex[tri[1] as usize], edge_vertex[tri[2] as usize]];
                    if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                        continue;
                    }
                    if mesh.triangle_area(&t) > DEGENERATE_AREA {
                        mesh.triangles.push(t);
                    }
                }
            }
        }
    }
    compact(&mut mesh);
    let status = if mesh.is_empty() { MeshStatus::Empty } else { MeshStatus::Ok };
    Ok((mesh, status))
}

/// Drops vertices no triangle references.
fn compact(mesh: &mut Mesh) {
    let mut remap = vec![u32::MAX; mesh.vertices.len()];
    let mut verts = Vec::with_capacity(mesh.vertices.len());
    for t in mesh.triangles.iter_mut() {
        for i in t.iter_mut() {
            if remap[*i as usize] == u32::MAX {
                remap[*i as usize] = verts.len() as u32;
                verts.push(mesh.vertices[*i as usize]);
            }
            *i = remap[*i as usize];
        }
    }
    mesh.vertices = verts;
}
