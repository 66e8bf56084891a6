//! Primitive test surfaces.

use crate::mesh::TriangleMesh;
use nalgebra::{Point3, Vector3};
use std::collections::HashMap;

fn push_quad(faces: &mut Vec<[usize; 3]>, verts: &[Point3<f64>], q: [usize; 4], outward: &Vector3<f64>) {
    let [a, b, c, d] = q;
    let n = (verts[b] - verts[a]).cross(&(verts[c] - verts[a]));
    if n.dot(outward) >= 0.0 {
        faces.push([a, b, c]);
        faces.push([a, c, d]);
    } else {
        faces.push([a, c, b]);
        faces.push([a, d, c]);
    }
}

/// Surface of `[0, size]³` with every face split into an `n × n` grid.
/// Vertices on shared cube edges are shared.
pub fn subdivided_cube(n: usize, size: f64) -> TriangleMesh {
    assert!(n >= 1);
    let mut ids: HashMap<[usize; 3], usize> = HashMap::new();
    let mut verts = Vec::new();
    let mut faces = Vec::new();
    let h = size / n as f64;
    for axis in 0..3 {
        for side in [0, n] {
            let (ua, va) = ((axis + 1) % 3, (axis + 2) % 3);
            let mut outward = Vector3::zeros();
            outward[axis] = if side == 0 { -1.0 } else { 1.0 };
            let mut id = |u: usize, v: usize, verts: &mut Vec<Point3<f64>>| {
                let mut key = [0; 3];
                key[axis] = side;
                key[ua] = u;
                key[va] = v;
                *ids.entry(key).or_insert_with(|| {
                    verts.push(Point3::new(key[0] as f64 * h, key[1] as f64 * h, key[2] as f64 * h));
                    verts.len() - 1
                })
            };
            for u in 0..n {
                for v in 0..n {
                    let q = [id(u, v, &mut verts), id(u + 1, v, &mut verts), id(u + 1, v + 1, &mut verts), id(u, v + 1, &mut verts)];
                    push_quad(&mut faces, &verts, q, &outward);
                }
            }
        }
    }
    TriangleMesh::new(verts, faces).expect("cube construction is valid")
}

/// Open `n × n` vertex grid with spacing `h` in the plane z = 0.
pub fn flat_grid(n: usize, h: f64) -> TriangleMesh {
    assert!(n >= 2);
    let verts: Vec<Point3<f64>> = (0..n * n).map(|i| Point3::new((i % n) as f64 * h, (i / n) as f64 * h, 0.0)).collect();
    let mut faces = Vec::new();
    for j in 0..n - 1 {
        for i in 0..n - 1 {
            let a = j * n + i;
            push_quad(&mut faces, &verts, [a, a + 1, a + n + 1, a + n], &Vector3::z());
        }
    }
    TriangleMesh::new(verts, faces).expect("grid construction is valid")
}

/// Unit icosphere after `subdivisions` rounds of 4-to-1 splitting.
pub fn icosphere(subdivisions: usize) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Point3<f64>> = [
        (-1.0, t, 0.0), (1.0, t, 0.0), (-1.0, -t, 0.0), (1.0, -t, 0.0),
        (0.0, -1.0, t), (0.0, 1.0, t), (0.0, -1.0, -t), (0.0, 1.0, -t),
        (t, 0.0, -1.0), (t, 0.0, 1.0), (-t, 0.0, -1.0), (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Point3::from(Vector3::new(x, y, z).normalize()))
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let mut m = |i: usize, j: usize| {
                *mid.entry((i.min(j), i.max(j))).or_insert_with(|| {
                    verts.push(Point3::from(((verts[i].coords + verts[j].coords) / 2.0).normalize()));
                    verts.len() - 1
                })
            };
            let (ab, bc, ca) = (m(a, b), m(b, c), m(c, a));
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    TriangleMesh::new(verts, faces).expect("icosphere construction is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::compute_stats;

    #[test]
    fn cube_counts() {
        let m = subdivided_cube(10, 1.0);
        // 6n² + 2: Euler characteristic of a sphere with 12n² triangles.
        assert_eq!(m.vertex_count(), 602);
        assert_eq!(m.face_count(), 1200);
        assert_eq!(m.unique_edges().len(), 1800);
    }

    #[test]
    fn outward_orientation() {
        for m in [subdivided_cube(3, 2.0), icosphere(2)] {
            let c = m.centroid().unwrap();
            for f in 0..m.face_count() {
                let [a, b, d] = m.triangle(f);
                let n = (b - a).cross(&(d - a));
                assert!(n.dot(&(a - c)) > 0.0);
            }
        }
    }

    #[test]
    fn icosphere_on_unit_sphere() {
        let m = icosphere(3);
        assert_eq!(m.vertex_count(), 642);
        assert!(m.vertices().iter().all(|v| (v.coords.norm() - 1.0).abs() < 1e-15));
        let s = compute_stats(&flat_grid(4, 0.5)).unwrap();
        assert!((s.bbox_max.x - 1.5).abs() < 1e-15);
    }
}
