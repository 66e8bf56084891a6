//! Snapping registered landmarks onto ridges of the target surface.
//!
//! Each landmark gets a cutting plane (normal from its group's rule). Among
//! the cross-section points within the search radius, the one with the
//! highest interpolated edge value wins. Without any candidate the landmark
//! falls back to the nearest mesh vertex and is flagged as such.

use crate::edges::EdgeField;
use crate::frame::{AnatomicalFrame, CuttingPlane, FrameAxis};
use crate::landmarks::{landmark_group_stats, Landmark, LandmarkSet, LigamentGroup, Status};
use crate::mesh::{SpatialIndex, TriangleMesh};
use crate::poi::{plane_mesh_intersection, CurvePoint};
use nalgebra::Point3;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Edge values closer than this count as equal during selection.
pub const EDGE_TIE_EPS: f64 = 1e-12;
pub const DEFAULT_SEARCH_RADIUS: f64 = 5.0;

#[derive(Debug, Error, PartialEq)]
pub enum ProjectionError {
    #[error("no projection rule for group {0}")]
    MissingRule(LigamentGroup),
    #[error("target mesh is empty")]
    EmptyMesh,
    #[error("edge field has {got} values but the mesh has {expected} vertices")]
    EdgeFieldLength { expected: usize, got: usize },
    #[error("invalid projection rule: {0}")]
    InvalidRule(String),
}

/// Point the cutting plane passes through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PlaneAnchor {
    /// Mean of all landmarks in the group.
    GroupCentroid,
    /// Mean of the group's landmarks on the same side.
    SideCentroid,
    /// The landmark itself.
    Landmark,
}

impl FromStr for PlaneAnchor {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "group" | "group_centroid" => Ok(PlaneAnchor::GroupCentroid),
            "side" | "side_centroid" => Ok(PlaneAnchor::SideCentroid),
            "landmark" => Ok(PlaneAnchor::Landmark),
            other => Err(format!("unknown plane anchor `{other}` (expected group, side or landmark)")),
        }
    }
}

impl fmt::Display for PlaneAnchor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlaneAnchor::GroupCentroid => "group",
            PlaneAnchor::SideCentroid => "side",
            PlaneAnchor::Landmark => "landmark",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionRule {
    pub group: LigamentGroup,
    /// Frame axis used as the plane normal.
    pub plane_axis: FrameAxis,
    pub search_radius: f64,
    pub anchor: PlaneAnchor,
}

impl ProjectionRule {
    pub fn validate(&self) -> Result<(), ProjectionError> {
        if self.search_radius > 0.0 && self.search_radius.is_finite() {
            Ok(())
        } else {
            Err(ProjectionError::InvalidRule(format!("{}: search radius must be positive, got {}", self.group, self.search_radius)))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleTable {
    rules: BTreeMap<LigamentGroup, ProjectionRule>,
}

impl Default for RuleTable {
    /// One plane per landmark, oriented across the ridge the group sits on:
    /// body rims and lamina edges are cut by sagittal-parallel planes, the
    /// transverse-process ridges by frontal ones, the articular edges and
    /// interspinous slopes by transverse ones, the spinous tip sagittally.
    fn default() -> Self {
        use FrameAxis::*;
        use LigamentGroup::*;
        Self::from_axes(
            [(All, Lr), (Pll, Lr), (Cl, Si), (Lf, Lr), (Isl, Si), (Ssl, Lr), (Itl, Ap)],
            |_| PlaneAnchor::Landmark,
        )
    }
}

impl RuleTable {
    fn from_axes(axes: [(LigamentGroup, FrameAxis); 7], anchor: impl Fn(LigamentGroup) -> PlaneAnchor) -> Self {
        let rules = axes
            .into_iter()
            .map(|(group, plane_axis)| {
                (group, ProjectionRule { group, plane_axis, search_radius: DEFAULT_SEARCH_RADIUS, anchor: anchor(group) })
            })
            .collect();
        Self { rules }
    }

    /// Centroid-anchored table: one transverse cut per group for ALL, PLL
    /// and ITL, per-side transverse cuts for CL and LF, and per-side
    /// sagittal cuts for ISL and SSL.
    pub fn centroid_planes() -> Self {
        use FrameAxis::*;
        use LigamentGroup::*;
        Self::from_axes([(All, Si), (Pll, Si), (Itl, Si), (Cl, Si), (Lf, Si), (Isl, Lr), (Ssl, Lr)], |g| match g {
            All | Pll | Itl => PlaneAnchor::GroupCentroid,
            _ => PlaneAnchor::SideCentroid,
        })
    }

    pub fn empty() -> Self {
        Self { rules: BTreeMap::new() }
    }

    pub fn get(&self, group: LigamentGroup) -> Option<&ProjectionRule> {
        self.rules.get(&group)
    }

    pub fn set(&mut self, rule: ProjectionRule) -> Result<(), ProjectionError> {
        rule.validate()?;
        self.rules.insert(rule.group, rule);
        Ok(())
    }

    pub fn get_mut(&mut self, group: LigamentGroup) -> Option<&mut ProjectionRule> {
        self.rules.get_mut(&group)
    }

    pub fn rules(&self) -> impl Iterator<Item = &ProjectionRule> {
        self.rules.values()
    }

    /// Same table with every search radius replaced.
    pub fn with_radius(mut self, r: f64) -> Self {
        for rule in self.rules.values_mut() {
            rule.search_radius = r;
        }
        self
    }
}

/// Picks the highest edge value among `points` within `radius` of `target`
/// (inclusive). Values within [`EDGE_TIE_EPS`] of the maximum tie; ties go
/// to the point nearest `target`, then to the lowest index.
pub fn select_candidate<'a>(points: impl Iterator<Item = &'a CurvePoint> + Clone, target: &Point3<f64>, radius: f64) -> Option<&'a CurvePoint> {
    let r2 = radius * radius;
    let within = move |p: &&CurvePoint| (p.position - target).norm_squared() <= r2;
    let best = points.clone().filter(within).map(|p| p.attribute.unwrap_or(0.0)).fold(f64::NEG_INFINITY, f64::max);
    if best == f64::NEG_INFINITY {
        return None;
    }
    let mut chosen: Option<(&CurvePoint, f64)> = None;
    for p in points.filter(within).filter(|p| p.attribute.unwrap_or(0.0) >= best - EDGE_TIE_EPS) {
        let d = (p.position - target).norm_squared();
        if chosen.is_none_or(|(_, cd)| d < cd) {
            chosen = Some((p, d));
        }
    }
    chosen.map(|(p, _)| p)
}

/// Projects every landmark onto `mesh`.
///
/// `index` must be built over the vertices of `mesh`; `edges` must hold one
/// value per vertex. Landmarks are processed independently (in parallel) and
/// returned in input order.
pub fn project_landmarks(
    mesh: &TriangleMesh,
    index: &SpatialIndex,
    frame: &AnatomicalFrame,
    edges: &EdgeField,
    landmarks: &LandmarkSet,
    rules: &RuleTable,
) -> Result<LandmarkSet, ProjectionError> {
    if mesh.is_empty() {
        return Err(ProjectionError::EmptyMesh);
    }
    if edges.values.len() != mesh.vertex_count() {
        return Err(ProjectionError::EdgeFieldLength { expected: mesh.vertex_count(), got: edges.values.len() });
    }
    for g in landmarks.groups() {
        rules.get(g).ok_or(ProjectionError::MissingRule(g))?.validate()?;
    }
    if landmarks.is_empty() {
        return Ok(landmarks.clone());
    }
    let stats = landmark_group_stats(landmarks).expect("set is non-empty");

    let projected: Vec<Landmark> = landmarks
        .landmarks()
        .par_iter()
        .map(|l| {
            let rule = rules.get(l.group).expect("checked above");
            let anchor = match rule.anchor {
                PlaneAnchor::GroupCentroid => stats.by_group[&l.group],
                PlaneAnchor::SideCentroid => stats.by_group_side[&(l.group, l.side)],
                PlaneAnchor::Landmark => l.position,
            };
            let plane = CuttingPlane::new(anchor, frame.axis(rule.plane_axis)).expect("frame axes are unit vectors");
            let curve = plane_mesh_intersection(mesh, &plane, Some(&edges.values)).expect("edge field length checked");
            match select_candidate(curve.points(), &l.position, rule.search_radius) {
                Some(p) => Landmark { position: p.position, status: Status::Projected, ..*l },
                None => {
                    let (v, _) = index.nearest(&l.position).expect("mesh is non-empty");
                    log::debug!("{}: no cross-section point within {} mm; using vertex {v}", l.key(), rule.search_radius);
                    Landmark { position: mesh.vertex(v), status: Status::FallbackNearestVertex, ..*l }
                }
            }
        })
        .collect();
    Ok(LandmarkSet::new(projected).expect("keys are unchanged"))
}
