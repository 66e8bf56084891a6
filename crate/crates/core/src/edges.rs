//! Per-vertex edge value: how far a vertex sits from the centroid of its
//! neighbors within a radius, relative to that radius.
//!
//! Flat or symmetric neighborhoods score near 0; ridges and corners, where
//! the neighborhood is lopsided, score high.

use crate::mesh::{compute_stats, MeshError, SpatialIndex, TriangleMesh};
use nalgebra::{Point3, Vector3};
use rayon::prelude::*;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

/// Multiple of the mean edge length used for [`EdgeRadius::Auto`].
pub const AUTO_RADIUS_FACTOR: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum EdgeRadius {
    #[default]
    Auto,
    Mm(f64),
}

impl FromStr for EdgeRadius {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("auto") {
            return Ok(EdgeRadius::Auto);
        }
        let r: f64 = s.parse().map_err(|_| format!("expected `auto` or a length in mm, got `{s}`"))?;
        if r > 0.0 && r.is_finite() {
            Ok(EdgeRadius::Mm(r))
        } else {
            Err(format!("edge radius must be positive, got {r}"))
        }
    }
}

impl fmt::Display for EdgeRadius {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EdgeRadius::Auto => f.write_str("auto"),
            EdgeRadius::Mm(r) => write!(f, "{r}"),
        }
    }
}

impl EdgeRadius {
    pub fn resolve(self, mesh: &TriangleMesh) -> Result<f64, MeshError> {
        let r = match self {
            EdgeRadius::Auto => AUTO_RADIUS_FACTOR * compute_stats(mesh)?.mean_edge_length,
            EdgeRadius::Mm(r) => r,
        };
        if r > 0.0 && r.is_finite() {
            Ok(r)
        } else {
            Err(MeshError::NonPositiveRadius(r))
        }
    }
}

/// One value in `[0, 1]` per mesh vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeField {
    pub values: Vec<f64>,
    pub radius_used: f64,
}

/// Value of vertex `v` given its neighbors, summed in the order given.
#[inline]
pub fn edge_value(v: &Point3<f64>, neighbors: impl Iterator<Item = Point3<f64>>, radius: f64) -> f64 {
    let mut sum = Vector3::zeros();
    let mut n = 0usize;
    for p in neighbors {
        sum += p.coords;
        n += 1;
    }
    if n == 0 {
        return 0.0;
    }
    let centroid = sum / n as f64;
    ((v.coords - centroid).norm() / radius).min(1.0)
}

pub fn compute_edge_values(mesh: &TriangleMesh, index: &SpatialIndex, radius: EdgeRadius) -> Result<EdgeField, MeshError> {
    if mesh.is_empty() {
        return Err(MeshError::EmptyMesh);
    }
    if let EdgeRadius::Mm(r) = radius {
        if !(r > 0.0) {
            return Err(MeshError::NonPositiveRadius(r));
        }
    }
    let r = radius.resolve(mesh)?;
    let verts = mesh.vertices();
    let values = (0..verts.len())
        .into_par_iter()
        .map_init(Vec::new, |buf, i| {
            index.radius_query_into(&verts[i], r, buf).expect("radius validated above");
            edge_value(&verts[i], buf.iter().filter(|&&j| j != i).map(|&j| verts[j]), r)
        })
        .collect();
    Ok(EdgeField { values, radius_used: r })
}

impl EdgeField {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "vertex_index,value")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(out, "{i},{v}")?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<(), MeshError> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut out)?;
        out.flush()?;
        Ok(())
    }

    /// Parses the CSV written by [`EdgeField::write_csv`]. The radius is
    /// not stored in the file and must be supplied.
    pub fn from_csv(text: &str, radius_used: f64) -> Result<Self, MeshError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "vertex_index,value" => {}
            _ => return Err(MeshError::parse("line 1", "expected header `vertex_index,value`")),
        }
        let mut values = Vec::new();
        for (n, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let loc = format!("line {}", n + 1);
            let (i, v) = line.split_once(',').ok_or_else(|| MeshError::parse(&loc, "expected two fields"))?;
            let i: usize = i.trim().parse().map_err(|_| MeshError::parse(&loc, "bad vertex index"))?;
            let v: f64 = v.trim().parse().map_err(|_| MeshError::parse(&loc, "bad value"))?;
            if i != values.len() {
                return Err(MeshError::parse(&loc, format!("expected vertex index {}", values.len())));
            }
            if !(0.0..=1.0).contains(&v) {
                return Err(MeshError::parse(&loc, "value outside [0, 1]"));
            }
            values.push(v);
        }
        Ok(Self { values, radius_used })
    }
}
