//! Accuracy metrics for detected landmarks against ground truth.

use crate::landmarks::{LandmarkKey, LandmarkSet, LigamentGroup, Side};
use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("landmark keys differ between the sets: {}", list(.0))]
    KeyMismatch(Vec<LandmarkKey>),
    #[error("no landmarks to compare")]
    Empty,
}

fn list(keys: &[LandmarkKey]) -> String {
    keys.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkResidual {
    pub group: LigamentGroup,
    pub bundle: u32,
    pub side: Side,
    pub distance_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// Distance between the group's mean detected and mean true position.
    pub per_group_mm: BTreeMap<LigamentGroup, f64>,
    /// Mean of the per-group values.
    pub avg_mm: f64,
    /// Root mean square of the per-landmark distances.
    pub rmse_mm: f64,
    /// Wall-clock pipeline time, when known.
    pub runtime_s: Option<f64>,
    /// Per-landmark distances, in ground-truth order.
    pub residuals: Vec<LandmarkResidual>,
}

impl EvaluationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }

    pub fn group(&self, g: LigamentGroup) -> Option<f64> {
        self.per_group_mm.get(&g).copied()
    }
}

/// Compares two landmark sets keyed by `(group, bundle, side)`.
pub fn evaluate(detected: &LandmarkSet, truth: &LandmarkSet) -> Result<EvaluationReport, EvalError> {
    let mut missing: Vec<LandmarkKey> = truth.landmarks().iter().map(|l| l.key()).filter(|k| detected.get(*k).is_none()).collect();
    missing.extend(detected.landmarks().iter().map(|l| l.key()).filter(|k| truth.get(*k).is_none()));
    if !missing.is_empty() {
        missing.sort();
        return Err(EvalError::KeyMismatch(missing));
    }
    if truth.is_empty() {
        return Err(EvalError::Empty);
    }

    let mut sums: BTreeMap<LigamentGroup, (Vector3<f64>, Vector3<f64>, usize)> = BTreeMap::new();
    let mut residuals = Vec::with_capacity(truth.len());
    let mut sq = 0.0;
    for t in truth.landmarks() {
        let d = detected.get(t.key()).expect("keys checked").position;
        let dist = (d - t.position).norm();
        sq += dist * dist;
        residuals.push(LandmarkResidual { group: t.group, bundle: t.bundle, side: t.side, distance_mm: dist });
        let e = sums.entry(t.group).or_insert((Vector3::zeros(), Vector3::zeros(), 0));
        e.0 += d.coords;
        e.1 += t.position.coords;
        e.2 += 1;
    }
    let per_group_mm: BTreeMap<LigamentGroup, f64> = sums
        .into_iter()
        .map(|(g, (d, t, n))| {
            let (md, mt) = (Point3::from(d / n as f64), Point3::from(t / n as f64));
            (g, (md - mt).norm())
        })
        .collect();
    let avg_mm = per_group_mm.values().sum::<f64>() / per_group_mm.len() as f64;
    Ok(EvaluationReport { per_group_mm, avg_mm, rmse_mm: (sq / truth.len() as f64).sqrt(), runtime_s: None, residuals })
}
