use super::{MeshError, TriangleMesh};
use nalgebra::Point3;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeshStats {
    pub bbox_min: Point3<f64>,
    pub bbox_max: Point3<f64>,
    pub bbox_diagonal: f64,
    pub centroid: Point3<f64>,
    /// Mean over unique undirected edges; 0 for a mesh without faces.
    pub mean_edge_length: f64,
    pub vertex_count: usize,
    pub face_count: usize,
}

pub fn compute_stats(mesh: &TriangleMesh) -> Result<MeshStats, MeshError> {
    let centroid = mesh.centroid().ok_or(MeshError::EmptyMesh)?;
    let (bbox_min, bbox_max) = mesh.vertices().iter().fold(
        (Point3::from([f64::INFINITY; 3]), Point3::from([f64::NEG_INFINITY; 3])),
        |(lo, hi), v| (lo.inf(v), hi.sup(v)),
    );
    let edges = mesh.unique_edges();
    let mean_edge_length = if edges.is_empty() {
        0.0
    } else {
        edges.iter().map(|&(i, j)| (mesh.vertex(i) - mesh.vertex(j)).norm()).sum::<f64>() / edges.len() as f64
    };
    Ok(MeshStats {
        bbox_min,
        bbox_max,
        bbox_diagonal: (bbox_max - bbox_min).norm(),
        centroid,
        mean_edge_length,
        vertex_count: mesh.vertex_count(),
        face_count: mesh.face_count(),
    })
}
