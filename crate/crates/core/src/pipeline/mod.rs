//! End-to-end orchestration, evaluation and synthetic data.

pub mod config;
pub mod eval;
pub mod suite;
pub mod synth;

pub use config::{ConfigError, PipelineConfig};
pub use eval::{evaluate, EvalError, EvaluationReport, LandmarkResidual};

use crate::edges::{compute_edge_values, EdgeField};
use crate::frame::{compute_frame, AnatomicalFrame, FrameError};
use crate::landmarks::{LandmarkSet, Status};
use crate::mesh::{MeshError, SpatialIndex, TriangleMesh};
use crate::poi::{detect_pois, PoiError, PoiSet};
use crate::projection::{project_landmarks, ProjectionError};
use crate::registration::{horn_align, match_by_name, RegistrationError, SimilarityTransform, TransformJson};
use serde::Serialize;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("frame stage ({mesh} mesh): {source}")]
    Frame { mesh: &'static str, source: FrameError },
    #[error("PoI stage ({mesh} mesh): {source}")]
    Poi { mesh: &'static str, source: PoiError },
    #[error("registration stage: {0}")]
    Registration(#[from] RegistrationError),
    #[error("edge stage: {0}")]
    Edges(#[from] MeshError),
    #[error("projection stage: {0}")]
    Projection(#[from] ProjectionError),
}

/// Wall-clock seconds per stage. File I/O is never included.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StageTimings {
    pub frame_s: f64,
    pub poi_s: f64,
    pub registration_s: f64,
    /// Spatial index construction plus edge values.
    pub edges_s: f64,
    pub projection_s: f64,
    pub total_s: f64,
}

impl StageTimings {
    pub fn stage_sum(&self) -> f64 {
        self.frame_s + self.poi_s + self.registration_s + self.edges_s + self.projection_s
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// Final landmarks on the target, statuses `projected` or
    /// `fallback_nearest_vertex`.
    pub landmarks: LandmarkSet,
    /// Atlas landmarks after registration, before projection.
    pub registered: LandmarkSet,
    pub transform: SimilarityTransform,
    pub atlas_frame: AnatomicalFrame,
    pub target_frame: AnatomicalFrame,
    pub atlas_pois: PoiSet,
    pub target_pois: PoiSet,
    pub edges: EdgeField,
    pub timings: StageTimings,
}

impl PipelineOutput {
    /// Result document: the landmark JSON schema plus the fitted transform.
    /// Timings are left out so identical runs produce identical bytes.
    pub fn to_json(&self) -> String {
        let mut doc = serde_json::to_value(&self.landmarks).expect("landmark sets always serialize");
        doc["transform"] = serde_json::to_value(TransformJson::from(&self.transform)).expect("transforms always serialize");
        serde_json::to_string_pretty(&doc).expect("values always serialize")
    }
}

/// Transfers the atlas landmarks onto the target mesh.
///
/// Stages: frames of both meshes, PoIs on both, name matching and
/// similarity fit, transform of the atlas landmarks, edge values of the
/// target, projection.
pub fn run_pipeline(
    atlas_mesh: &TriangleMesh,
    atlas_landmarks: &LandmarkSet,
    target_mesh: &TriangleMesh,
    config: &PipelineConfig,
) -> Result<PipelineOutput, PipelineError> {
    let start = Instant::now();
    let mut t = StageTimings::default();
    let hints = config.hints.as_ref();

    let clock = Instant::now();
    let atlas_frame = compute_frame(atlas_mesh, hints).map_err(|source| PipelineError::Frame { mesh: "atlas", source })?;
    let target_frame = compute_frame(target_mesh, hints).map_err(|source| PipelineError::Frame { mesh: "target", source })?;
    t.frame_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let atlas_pois =
        detect_pois(atlas_mesh, &atlas_frame, config.poi_scheme).map_err(|source| PipelineError::Poi { mesh: "atlas", source })?;
    let target_pois =
        detect_pois(target_mesh, &target_frame, config.poi_scheme).map_err(|source| PipelineError::Poi { mesh: "target", source })?;
    t.poi_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let corr = match_by_name(&atlas_pois, &target_pois)?;
    let transform = horn_align(&corr, config.with_scale)?;
    let registered = atlas_landmarks.map_positions(Status::Registered, |p| transform.apply_point(p));
    t.registration_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let index = SpatialIndex::build(target_mesh);
    let edges = compute_edge_values(target_mesh, &index, config.edge_radius)?;
    t.edges_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let landmarks = project_landmarks(target_mesh, &index, &target_frame, &edges, &registered, &config.rules)?;
    t.projection_s = clock.elapsed().as_secs_f64();

    t.total_s = start.elapsed().as_secs_f64();
    log::debug!("pipeline timings: {t:?}");
    Ok(PipelineOutput { landmarks, registered, transform, atlas_frame, target_frame, atlas_pois, target_pois, edges, timings: t })
}
