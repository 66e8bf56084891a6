//! Plane–mesh cross-sections and the named extremal points of interest used
//! as registration correspondences.

use crate::frame::{frontal_plane, sagittal_plane, AnatomicalFrame, CuttingPlane, LocalCoords};
use crate::mesh::TriangleMesh;
use nalgebra::Point3;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

/// Vertices closer to the plane than this (mm) count as lying on its
/// positive side.
pub const ON_PLANE_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum PoiError {
    #[error("the {0} cross-section is empty")]
    EmptyIntersection(&'static str),
    #[error("no cross-section point qualifies for `{0}`")]
    EmptyBand(PoiLabel),
    #[error("expected {expected} per-vertex attributes, got {got}")]
    AttributeLength { expected: usize, got: usize },
}

/// Identity of a cross-section point: either a mesh vertex on the plane or
/// the crossing of an undirected mesh edge `(lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CrossingKey {
    Vertex(usize),
    Edge(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub position: Point3<f64>,
    /// Linearly interpolated per-vertex attribute, when one was supplied.
    pub attribute: Option<f64>,
    pub key: CrossingKey,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveSegment {
    pub face: usize,
    pub ends: [CurvePoint; 2],
}

impl CurveSegment {
    pub fn length(&self) -> f64 {
        (self.ends[1].position - self.ends[0].position).norm()
    }
}

/// Cross-section of a mesh by a plane, one segment per crossing triangle in
/// face order.
#[derive(Debug, Clone, PartialEq)]
pub struct IntersectionCurve {
    pub plane: CuttingPlane,
    pub segments: Vec<CurveSegment>,
}

impl IntersectionCurve {
    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn total_length(&self) -> f64 {
        self.segments.iter().map(CurveSegment::length).sum()
    }

    /// Segment endpoints in construction order; point `2·i + k` is end `k`
    /// of segment `i`.
    pub fn points(&self) -> impl Iterator<Item = &CurvePoint> + Clone + '_ {
        self.segments.iter().flat_map(|s| s.ends.iter())
    }

    /// Connected-component id for every point of [`points`](Self::points).
    /// Two points are connected when they share a segment or a crossing key.
    pub fn component_ids(&self) -> Vec<usize> {
        let mut ids: HashMap<CrossingKey, usize> = HashMap::new();
        let mut parent: Vec<usize> = Vec::new();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        let mut point_node = Vec::with_capacity(2 * self.segments.len());
        for seg in &self.segments {
            let [a, b] = seg.ends.map(|p| {
                *ids.entry(p.key).or_insert_with(|| {
                    parent.push(parent.len());
                    parent.len() - 1
                })
            });
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
            point_node.push(a);
            point_node.push(b);
        }
        point_node.into_iter().map(|n| find(&mut parent, n)).collect()
    }
}

/// Intersects `mesh` with `plane`.
///
/// Vertices within [`ON_PLANE_EPS`] of the plane count as positive. Each
/// triangle with vertices on both sides contributes one segment whose ends
/// are linearly interpolated along the two crossing edges (or are the
/// on-plane vertex itself). Zero-length segments are skipped.
pub fn plane_mesh_intersection(
    mesh: &TriangleMesh,
    plane: &CuttingPlane,
    attributes: Option<&[f64]>,
) -> Result<IntersectionCurve, PoiError> {
    if let Some(a) = attributes {
        if a.len() != mesh.vertex_count() {
            return Err(PoiError::AttributeLength { expected: mesh.vertex_count(), got: a.len() });
        }
    }
    let dist: Vec<f64> = mesh.vertices().iter().map(|v| plane.signed_distance(v)).collect();
    let positive = |i: usize| dist[i] > -ON_PLANE_EPS;
    let crossing = |i: usize, j: usize| -> CurvePoint {
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        for v in [lo, hi] {
            if dist[v].abs() < ON_PLANE_EPS {
                return CurvePoint { position: mesh.vertex(v), attribute: attributes.map(|a| a[v]), key: CrossingKey::Vertex(v) };
            }
        }
        let t = dist[lo] / (dist[lo] - dist[hi]);
        let (p, q) = (mesh.vertex(lo), mesh.vertex(hi));
        CurvePoint {
            position: p + (q - p) * t,
            attribute: attributes.map(|a| a[lo] + (a[hi] - a[lo]) * t),
            key: CrossingKey::Edge(lo, hi),
        }
    };

    let mut segments = Vec::new();
    for (fi, f) in mesh.faces().iter().enumerate() {
        let sides = f.map(positive);
        if sides[0] == sides[1] && sides[1] == sides[2] {
            continue;
        }
        let mut ends = [None, None];
        let mut n = 0;
        for k in 0..3 {
            let (i, j) = (f[k], f[(k + 1) % 3]);
            if positive(i) != positive(j) {
                ends[n] = Some(crossing(i, j));
                n += 1;
            }
        }
        let (a, b) = (ends[0].unwrap(), ends[1].unwrap());
        if a.key == b.key {
            continue;
        }
        segments.push(CurveSegment { face: fi, ends: [a, b] });
    }
    Ok(IntersectionCurve { plane: *plane, segments })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoiScheme {
    Poi15,
    Poi8,
}

impl PoiScheme {
    pub fn labels(self) -> &'static [PoiLabel] {
        match self {
            PoiScheme::Poi15 => &PoiLabel::ALL,
            PoiScheme::Poi8 => &PoiLabel::ENDPLATE,
        }
    }
}

impl std::str::FromStr for PoiScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "poi15" | "15" => Ok(PoiScheme::Poi15),
            "poi8" | "8" => Ok(PoiScheme::Poi8),
            other => Err(format!("unknown PoI scheme `{other}` (expected poi15 or poi8)")),
        }
    }
}

impl std::fmt::Display for PoiScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PoiScheme::Poi15 => "poi15",
            PoiScheme::Poi8 => "poi8",
        })
    }
}

/// Fixed vocabulary of point-of-interest names, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoiLabel {
    SagAnteriorSuperior,
    SagAnteriorInferior,
    SagPosteriorExtreme,
    SagSuperiorExtreme,
    SagInferiorExtreme,
    SagPosteriorSuperior,
    SagPosteriorInferior,
    FrontLeftExtreme,
    FrontRightExtreme,
    FrontSuperiorLeft,
    FrontSuperiorRight,
    FrontInferiorLeft,
    FrontInferiorRight,
    FrontLeftSuperiorProcess,
    FrontRightSuperiorProcess,
}

impl PoiLabel {
    pub const ALL: [PoiLabel; 15] = [
        PoiLabel::SagAnteriorSuperior,
        PoiLabel::SagAnteriorInferior,
        PoiLabel::SagPosteriorExtreme,
        PoiLabel::SagSuperiorExtreme,
        PoiLabel::SagInferiorExtreme,
        PoiLabel::SagPosteriorSuperior,
        PoiLabel::SagPosteriorInferior,
        PoiLabel::FrontLeftExtreme,
        PoiLabel::FrontRightExtreme,
        PoiLabel::FrontSuperiorLeft,
        PoiLabel::FrontSuperiorRight,
        PoiLabel::FrontInferiorLeft,
        PoiLabel::FrontInferiorRight,
        PoiLabel::FrontLeftSuperiorProcess,
        PoiLabel::FrontRightSuperiorProcess,
    ];

    /// Vertebral-body endplate corners.
    pub const ENDPLATE: [PoiLabel; 8] = [
        PoiLabel::SagAnteriorSuperior,
        PoiLabel::SagAnteriorInferior,
        PoiLabel::SagPosteriorSuperior,
        PoiLabel::SagPosteriorInferior,
        PoiLabel::FrontSuperiorLeft,
        PoiLabel::FrontSuperiorRight,
        PoiLabel::FrontInferiorLeft,
        PoiLabel::FrontInferiorRight,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PoiLabel::SagAnteriorSuperior => "sag_anterior_superior",
            PoiLabel::SagAnteriorInferior => "sag_anterior_inferior",
            PoiLabel::SagPosteriorExtreme => "sag_posterior_extreme",
            PoiLabel::SagSuperiorExtreme => "sag_superior_extreme",
            PoiLabel::SagInferiorExtreme => "sag_inferior_extreme",
            PoiLabel::SagPosteriorSuperior => "sag_posterior_superior",
            PoiLabel::SagPosteriorInferior => "sag_posterior_inferior",
            PoiLabel::FrontLeftExtreme => "front_left_extreme",
            PoiLabel::FrontRightExtreme => "front_right_extreme",
            PoiLabel::FrontSuperiorLeft => "front_superior_left",
            PoiLabel::FrontSuperiorRight => "front_superior_right",
            PoiLabel::FrontInferiorLeft => "front_inferior_left",
            PoiLabel::FrontInferiorRight => "front_inferior_right",
            PoiLabel::FrontLeftSuperiorProcess => "front_left_superior_process",
            PoiLabel::FrontRightSuperiorProcess => "front_right_superior_process",
        }
    }

    pub fn is_sagittal(self) -> bool {
        self.as_str().starts_with("sag_")
    }
}

impl std::fmt::Display for PoiLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Poi {
    pub name: PoiLabel,
    #[serde(rename = "xyz")]
    pub position: Point3<f64>,
}

/// Named points of interest for one mesh, in vocabulary order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiSet {
    pub scheme: PoiScheme,
    pub points: Vec<Poi>,
}

impl PoiSet {
    pub fn get(&self, label: PoiLabel) -> Option<Point3<f64>> {
        self.points.iter().find(|p| p.name == label).map(|p| p.position)
    }

    /// Checks the count and that names are unique members of the scheme.
    pub fn validate(&self) -> Result<(), String> {
        let labels = self.scheme.labels();
        if self.points.len() != labels.len() {
            return Err(format!("{} expects {} points, got {}", self.scheme, labels.len(), self.points.len()));
        }
        for (i, p) in self.points.iter().enumerate() {
            if !labels.contains(&p.name) {
                return Err(format!("`{}` is not part of {}", p.name, self.scheme));
            }
            if self.points[..i].iter().any(|q| q.name == p.name) {
                return Err(format!("duplicate point `{}`", p.name));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("PoI sets always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let set: PoiSet = serde_json::from_str(text).map_err(|e| e.to_string())?;
        set.validate()?;
        Ok(set)
    }
}

struct Candidate {
    position: Point3<f64>,
    local: LocalCoords,
    component: usize,
}

fn candidates(curve: &IntersectionCurve, frame: &AnatomicalFrame) -> Vec<Candidate> {
    let comps = curve.component_ids();
    curve
        .points()
        .zip(comps)
        .map(|(p, component)| Candidate { position: p.position, local: frame.local(&p.position), component })
        .collect()
}

/// Position maximizing `key` among candidates passing `keep`; exact ties go
/// to the lowest construction index.
fn extremum(
    label: PoiLabel,
    cands: &[Candidate],
    keep: impl Fn(&Candidate) -> bool,
    key: impl Fn(&Candidate) -> f64,
) -> Result<Point3<f64>, PoiError> {
    let mut best: Option<(&Candidate, f64)> = None;
    let mut tie = false;
    for c in cands.iter().filter(|c| keep(c)) {
        let k = key(c);
        match best {
            None => best = Some((c, k)),
            Some((_, bk)) if k > bk => {
                best = Some((c, k));
                tie = false;
            }
            Some((b, bk)) if k == bk => {
                // Shared endpoints of adjacent segments are the same point, not a tie.
                if b.position != c.position {
                    tie = true;
                }
            }
            _ => {}
        }
    }
    if tie {
        log::debug!("{label}: several cross-section points share the extremal value; keeping the first");
    }
    best.map(|(c, _)| c.position).ok_or(PoiError::EmptyBand(label))
}

/// Detects the named extrema on the sagittal and frontal cross-sections.
///
/// All coordinates are measured in `frame`: `a` along AP, `s` along SI and
/// `l` along LR, with the superior/inferior bands split at the origin. The
/// four sagittal body corners are taken from the cross-section component
/// that holds the most anterior point, i.e. the vertebral body outline.
pub fn detect_pois(mesh: &TriangleMesh, frame: &AnatomicalFrame, scheme: PoiScheme) -> Result<PoiSet, PoiError> {
    let sag = plane_mesh_intersection(mesh, &sagittal_plane(frame), None)?;
    if sag.is_empty() {
        return Err(PoiError::EmptyIntersection("sagittal"));
    }
    let front = plane_mesh_intersection(mesh, &frontal_plane(frame), None)?;
    if front.is_empty() {
        return Err(PoiError::EmptyIntersection("frontal"));
    }
    let sag = candidates(&sag, frame);
    let front = candidates(&front, frame);

    let body = sag
        .iter()
        .fold(None::<&Candidate>, |b, c| match b {
            Some(b) if b.local.a >= c.local.a => Some(b),
            _ => Some(c),
        })
        .map(|c| c.component)
        .expect("non-empty curve");

    let in_body = |c: &Candidate| c.component == body;
    let mut points = Vec::with_capacity(scheme.labels().len());
    for &label in scheme.labels() {
        use PoiLabel::*;
        let position = match label {
            SagAnteriorSuperior => extremum(label, &sag, |c| in_body(c) && c.local.s > 0.0, |c| c.local.a),
            SagAnteriorInferior => extremum(label, &sag, |c| in_body(c) && c.local.s < 0.0, |c| c.local.a),
            SagPosteriorSuperior => extremum(label, &sag, |c| in_body(c) && c.local.s > 0.0, |c| -c.local.a),
            SagPosteriorInferior => extremum(label, &sag, |c| in_body(c) && c.local.s < 0.0, |c| -c.local.a),
            SagPosteriorExtreme => extremum(label, &sag, |_| true, |c| -c.local.a),
            SagSuperiorExtreme => extremum(label, &sag, |_| true, |c| c.local.s),
            SagInferiorExtreme => extremum(label, &sag, |_| true, |c| -c.local.s),
            FrontLeftExtreme => extremum(label, &front, |_| true, |c| c.local.l),
            FrontRightExtreme => extremum(label, &front, |_| true, |c| -c.local.l),
            FrontSuperiorLeft => extremum(label, &front, |c| c.local.l > 0.0, |c| c.local.s),
            FrontSuperiorRight => extremum(label, &front, |c| c.local.l < 0.0, |c| c.local.s),
            FrontInferiorLeft => extremum(label, &front, |c| c.local.l > 0.0, |c| -c.local.s),
            FrontInferiorRight => extremum(label, &front, |c| c.local.l < 0.0, |c| -c.local.s),
            FrontLeftSuperiorProcess => extremum(
                label,
                &front,
                |c| c.local.l > 0.0 && c.local.s > 0.0,
                |c| c.local.l.hypot(c.local.s),
            ),
            FrontRightSuperiorProcess => extremum(
                label,
                &front,
                |c| c.local.l < 0.0 && c.local.s > 0.0,
                |c| c.local.l.hypot(c.local.s),
            ),
        }?;
        points.push(Poi { name: label, position });
    }
    Ok(PoiSet { scheme, points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::fixtures::unit_cube;
    use nalgebra::Vector3;

    fn plane_z(z: f64) -> CuttingPlane {
        CuttingPlane::new(Point3::new(0.0, 0.0, z), Vector3::z()).unwrap()
    }

    #[test]
    fn cube_mid_section_has_perimeter_four() {
        let curve = plane_mesh_intersection(&unit_cube(), &plane_z(0.5), None).unwrap();
        assert_eq!(curve.segments.len(), 8);
        assert!((curve.total_length() - 4.0).abs() < 1e-9);
        for p in curve.points() {
            assert!((p.position.z - 0.5).abs() < 1e-9);
        }
        // One closed loop.
        let ids = curve.component_ids();
        assert!(ids.iter().all(|&i| i == ids[0]));
    }

    #[test]
    fn plane_above_cube_is_empty() {
        assert!(plane_mesh_intersection(&unit_cube(), &plane_z(2.0), None).unwrap().is_empty());
    }

    #[test]
    fn plane_through_face_takes_vertices_exactly() {
        // z = 1 contains the top face; its vertices are on-plane and count as positive.
        let curve = plane_mesh_intersection(&unit_cube(), &plane_z(1.0), None).unwrap();
        for p in curve.points() {
            assert!(matches!(p.key, CrossingKey::Vertex(_)));
            assert_eq!(p.position.z, 1.0);
        }
        assert!((curve.total_length() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn attributes_interpolate_linearly() {
        let cube = unit_cube();
        let attr: Vec<f64> = cube.vertices().iter().map(|v| 3.0 * v.z + v.x).collect();
        let curve = plane_mesh_intersection(&cube, &plane_z(0.25), Some(&attr)).unwrap();
        for p in curve.points() {
            assert!((p.attribute.unwrap() - (0.75 + p.position.x)).abs() < 1e-12);
        }
        assert!(matches!(
            plane_mesh_intersection(&cube, &plane_z(0.25), Some(&attr[..3])),
            Err(PoiError::AttributeLength { .. })
        ));
    }

    #[test]
    fn poi_json_round_trip_and_validation() {
        let set = PoiSet {
            scheme: PoiScheme::Poi8,
            points: PoiLabel::ENDPLATE
                .iter()
                .enumerate()
                .map(|(i, &name)| Poi { name, position: Point3::new(i as f64, 0.5, -1.0) })
                .collect(),
        };
        let text = set.to_json();
        assert!(text.contains("\"scheme\": \"poi8\""));
        assert!(text.contains("\"name\": \"front_inferior_right\""));
        assert_eq!(PoiSet::from_json(&text).unwrap(), set);
        let mut bad = set.clone();
        bad.points.pop();
        assert!(bad.validate().is_err());
        let mut dup = set.clone();
        dup.points[1].name = dup.points[0].name;
        assert!(dup.validate().is_err());
    }

    #[test]
    fn poi8_is_subset_of_poi15() {
        for l in PoiLabel::ENDPLATE {
            assert!(PoiLabel::ALL.contains(&l));
        }
        assert_eq!(PoiScheme::Poi15.labels().len(), 15);
        assert_eq!(PoiScheme::Poi8.labels().len(), 8);
        let names: std::collections::HashSet<_> = PoiLabel::ALL.iter().map(|l| l.as_str()).collect();
        assert_eq!(names.len(), 15);
    }
}
