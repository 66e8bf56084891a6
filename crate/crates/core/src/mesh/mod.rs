//! Indexed triangle meshes, file I/O, summary statistics and a radius-query
//! spatial index over mesh vertices.
//!
//! All coordinates are millimetres. Meshes are immutable once built; every
//! downstream stage only reads them.

mod io;
mod spatial;
mod stats;

pub use io::{load_mesh, save_obj, save_ply_ascii, save_stl_binary, write_obj, LoadOptions, LoadReport, MeshFormat};
pub use spatial::SpatialIndex;
pub use stats::{compute_stats, MeshStats};

use nalgebra::{Point3, Vector3};
use std::path::PathBuf;
use thiserror::Error;

/// Faces with area at or below this value (mm²) are considered degenerate.
pub const DEGENERATE_AREA: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("face {face} references vertex {index} but the mesh has {count} vertices")]
    IndexOutOfBounds { face: usize, index: usize, count: usize },
    #[error("vertex {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("all {0} faces are degenerate")]
    DegenerateMesh(usize),
    #[error("mesh has degenerate face {0} and dropping is disabled")]
    DegenerateFace(usize),
    #[error("mesh is empty")]
    EmptyMesh,
    #[error("radius must be positive, got {0}")]
    NonPositiveRadius(f64),
}

impl MeshError {
    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        MeshError::Parse { location: location.into(), message: message.into() }
    }
}

/// An indexed triangle surface.
///
/// Invariants (checked at construction): every face index is in range, all
/// coordinates are finite and every face has area above [`DEGENERATE_AREA`].
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point3<f64>>,
    faces: Vec<[usize; 3]>,
}

impl TriangleMesh {
    /// Builds a mesh, rejecting any degenerate face.
    pub fn new(vertices: Vec<Point3<f64>>, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        Self::validate(&vertices, &faces)?;
        if let Some(f) = faces.iter().position(|f| triangle_area(&vertices, f) <= DEGENERATE_AREA) {
            return Err(MeshError::DegenerateFace(f));
        }
        Ok(Self { vertices, faces })
    }

    /// Builds a mesh, silently dropping degenerate faces. Returns the mesh and
    /// the number of dropped faces. Fails if faces were given and all of them
    /// are degenerate.
    pub fn with_degenerates_dropped(
        vertices: Vec<Point3<f64>>,
        faces: Vec<[usize; 3]>,
    ) -> Result<(Self, usize), MeshError> {
        Self::validate(&vertices, &faces)?;
        let total = faces.len();
        let kept: Vec<[usize; 3]> = faces
            .into_iter()
            .filter(|f| triangle_area(&vertices, f) > DEGENERATE_AREA)
            .collect();
        if total > 0 && kept.is_empty() {
            return Err(MeshError::DegenerateMesh(total));
        }
        let dropped = total - kept.len();
        Ok((Self { vertices, faces: kept }, dropped))
    }

    fn validate(vertices: &[Point3<f64>], faces: &[[usize; 3]]) -> Result<(), MeshError> {
        if let Some(i) = vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(MeshError::NonFinite(i));
        }
        let count = vertices.len();
        for (fi, f) in faces.iter().enumerate() {
            if let Some(&index) = f.iter().find(|&&i| i >= count) {
                return Err(MeshError::IndexOutOfBounds { face: fi, index, count });
            }
        }
        Ok(())
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertex(&self, i: usize) -> Point3<f64> {
        self.vertices[i]
    }

    pub fn triangle(&self, f: usize) -> [Point3<f64>; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Mean of all vertex positions.
    pub fn centroid(&self) -> Option<Point3<f64>> {
        if self.vertices.is_empty() {
            return None;
        }
        let sum = self.vertices.iter().fold(Vector3::zeros(), |acc, v| acc + v.coords);
        Some(Point3::from(sum / self.vertices.len() as f64))
    }

    /// Returns a copy with every vertex mapped through `f`. Faces that become
    /// degenerate are kept, so callers should only pass non-collapsing maps.
    pub fn map_vertices(&self, f: impl Fn(&Point3<f64>) -> Point3<f64>) -> TriangleMesh {
        TriangleMesh { vertices: self.vertices.iter().map(f).collect(), faces: self.faces.clone() }
    }

    /// Iterates unique undirected edges as `(lo, hi)` index pairs in sorted order.
    pub fn unique_edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<(usize, usize)> = self
            .faces
            .iter()
            .flat_map(|&[a, b, c]| [(a, b), (b, c), (c, a)])
            .map(|(i, j)| if i < j { (i, j) } else { (j, i) })
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }
}

pub(crate) fn triangle_area(vertices: &[Point3<f64>], f: &[usize; 3]) -> f64 {
    let [a, b, c] = [vertices[f[0]], vertices[f[1]], vertices[f[2]]];
    0.5 * (b - a).cross(&(c - a)).norm()
}

/// Closest point to `p` on triangle `abc` (Ericson, Real-Time Collision Detection).
pub fn closest_point_on_triangle(p: &Point3<f64>, a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>) -> Point3<f64> {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

/// Unsigned distance from `p` to the surface, by exhaustive scan over faces.
pub fn distance_to_surface(mesh: &TriangleMesh, p: &Point3<f64>) -> f64 {
    (0..mesh.face_count())
        .map(|f| {
            let [a, b, c] = mesh.triangle(f);
            (closest_point_on_triangle(p, &a, &b, &c) - p).norm()
        })
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn unit_cube() -> TriangleMesh {
        let v: Vec<Point3<f64>> = (0..8)
            .map(|i| Point3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64))
            .collect();
        let faces = vec![
            [0, 2, 1], [1, 2, 3], // z = 0
            [4, 5, 6], [5, 7, 6], // z = 1
            [0, 1, 4], [1, 5, 4], // y = 0
            [2, 6, 3], [3, 6, 7], // y = 1
            [0, 4, 2], [2, 4, 6], // x = 0
            [1, 3, 5], [3, 7, 5], // x = 1
        ];
        TriangleMesh::new(v, faces).unwrap()
    }

    pub fn tetrahedron() -> TriangleMesh {
        let v = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
        ];
        TriangleMesh::new(v, vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]]).unwrap()
    }
}
