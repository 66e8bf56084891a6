//! Synthetic evaluation suites: an undeformed proxy atlas against posed,
//! deformed copies with known landmarks.

use super::synth::{gen_synthetic, random_pose, Deformation, InvalidSpec, SyntheticSpec, SyntheticVertebra};
use super::{evaluate, run_pipeline, EvalError, EvaluationReport, PipelineConfig, PipelineError, StageTimings};
use crate::landmarks::Status;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt::{self, Write as _};
use std::str::FromStr;
use thiserror::Error;

pub const SUITE_NOISE_SIGMA: f64 = 0.5;
pub const SUITE_FRACTURE_DEPTH: f64 = 3.0;
/// Negative angles swing the posterior elements cranially.
pub const SUITE_TILT_DEGREES: f64 = -15.0;

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error(transparent)]
    Spec(#[from] InvalidSpec),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SuiteKind {
    /// Vertex noise σ = 0.5 mm under a random similarity pose.
    Default,
    /// Superior endplate fracture, 3 mm deep, under a random pose.
    Fracture,
    /// Posterior elements tilted 15° cranially plus vertex noise, under a random pose.
    Posterior,
}

impl FromStr for SuiteKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "default" | "noise" => Ok(SuiteKind::Default),
            "fracture" => Ok(SuiteKind::Fracture),
            "posterior" | "tilt" => Ok(SuiteKind::Posterior),
            other => Err(format!("unknown suite `{other}` (expected default, fracture or posterior)")),
        }
    }
}

impl fmt::Display for SuiteKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SuiteKind::Default => "default",
            SuiteKind::Fracture => "fracture",
            SuiteKind::Posterior => "posterior",
        })
    }
}

/// Target specification for one suite instance.
pub fn target_spec(kind: SuiteKind, seed: u64, edge_length: f64) -> SyntheticSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f7a_26e7);
    let pose = random_pose(&mut rng, 100.0, 0.9, 1.1);
    let deformations = match kind {
        SuiteKind::Default => vec![Deformation::Noise { sigma: SUITE_NOISE_SIGMA }],
        SuiteKind::Fracture => vec![Deformation::EndplateFracture { depth: SUITE_FRACTURE_DEPTH }],
        SuiteKind::Posterior => {
            vec![Deformation::PosteriorTilt { degrees: SUITE_TILT_DEGREES }, Deformation::Noise { sigma: SUITE_NOISE_SIGMA }]
        }
    };
    SyntheticSpec { edge_length, deformations, pose, seed, ..SyntheticSpec::default() }
}

#[derive(Debug, Clone)]
pub struct CaseResult {
    pub kind: SuiteKind,
    pub seed: u64,
    pub vertex_count: usize,
    pub report: EvaluationReport,
    pub timings: StageTimings,
    pub fallbacks: usize,
}

/// An undeformed proxy atlas plus the tessellation shared by its targets.
#[derive(Debug, Clone)]
pub struct Suite {
    pub edge_length: f64,
    pub atlas: SyntheticVertebra,
}

impl Suite {
    pub fn new(edge_length: f64) -> Result<Self, InvalidSpec> {
        let atlas = gen_synthetic(&SyntheticSpec { edge_length, ..SyntheticSpec::default() })?;
        Ok(Self { edge_length, atlas })
    }

    pub fn target(&self, kind: SuiteKind, seed: u64) -> Result<SyntheticVertebra, InvalidSpec> {
        gen_synthetic(&target_spec(kind, seed, self.edge_length))
    }

    /// Runs the pipeline from the atlas to one generated target and scores it.
    pub fn run_case(&self, kind: SuiteKind, seed: u64, config: &PipelineConfig) -> Result<CaseResult, SuiteError> {
        let target = self.target(kind, seed)?;
        let out = run_pipeline(&self.atlas.mesh, &self.atlas.landmarks, &target.mesh, config)?;
        let mut report = evaluate(&out.landmarks, &target.landmarks)?;
        report.runtime_s = Some(out.timings.total_s);
        Ok(CaseResult {
            kind,
            seed,
            vertex_count: target.mesh.vertex_count(),
            report,
            timings: out.timings,
            fallbacks: out.landmarks.count(Status::FallbackNearestVertex),
        })
    }

    /// Runs `seeds` one after another. Sequential on purpose: stage timings
    /// stay comparable across cases.
    pub fn bench(&self, kind: SuiteKind, seeds: impl IntoIterator<Item = u64>, config: &PipelineConfig) -> Result<Vec<CaseResult>, SuiteError> {
        seeds.into_iter().map(|seed| self.run_case(kind, seed, config)).collect()
    }
}

/// Per-stage timing table, one row per case.
pub fn timing_table(results: &[CaseResult]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<10} {:>5} {:>8} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>8} {:>8}",
        "suite", "seed", "verts", "frame_s", "poi_s", "reg_s", "edges_s", "proj_s", "total_s", "avg_mm", "rmse_mm"
    );
    for r in results {
        let t = &r.timings;
        let _ = writeln!(
            s,
            "{:<10} {:>5} {:>8} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>8.3} {:>8.3}",
            r.kind, r.seed, r.vertex_count, t.frame_s, t.poi_s, t.registration_s, t.edges_s, t.projection_s, t.total_s, r.report.avg_mm, r.report.rmse_mm
        );
    }
    s
}
