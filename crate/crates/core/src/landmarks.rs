//! Ligament attachment landmarks and their JSON form.

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LandmarkError {
    #[error("duplicate landmark {0}")]
    DuplicateKey(LandmarkKey),
    #[error("landmark set is empty")]
    EmptySet,
    #[error("landmark {0} has a non-finite position")]
    NonFinite(LandmarkKey),
    #[error("invalid landmark JSON: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LigamentGroup {
    #[serde(rename = "ALL")]
    All,
    #[serde(rename = "PLL")]
    Pll,
    #[serde(rename = "CL")]
    Cl,
    #[serde(rename = "LF")]
    Lf,
    #[serde(rename = "ISL")]
    Isl,
    #[serde(rename = "SSL")]
    Ssl,
    #[serde(rename = "ITL")]
    Itl,
}

impl LigamentGroup {
    pub const ALL_GROUPS: [LigamentGroup; 7] = [
        LigamentGroup::All,
        LigamentGroup::Pll,
        LigamentGroup::Cl,
        LigamentGroup::Lf,
        LigamentGroup::Isl,
        LigamentGroup::Ssl,
        LigamentGroup::Itl,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LigamentGroup::All => "ALL",
            LigamentGroup::Pll => "PLL",
            LigamentGroup::Cl => "CL",
            LigamentGroup::Lf => "LF",
            LigamentGroup::Isl => "ISL",
            LigamentGroup::Ssl => "SSL",
            LigamentGroup::Itl => "ITL",
        }
    }
}

impl fmt::Display for LigamentGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LigamentGroup {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL_GROUPS
            .into_iter()
            .find(|g| g.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown ligament group `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
    Midline,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Left => "left",
            Side::Right => "right",
            Side::Midline => "midline",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Annotated,
    Registered,
    Projected,
    FallbackNearestVertex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LandmarkKey {
    pub group: LigamentGroup,
    pub bundle: u32,
    pub side: Side,
}

impl fmt::Display for LandmarkKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.group, self.bundle, self.side)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub group: LigamentGroup,
    pub bundle: u32,
    pub side: Side,
    #[serde(rename = "xyz")]
    pub position: Point3<f64>,
    pub status: Status,
}

impl Landmark {
    pub fn key(&self) -> LandmarkKey {
        LandmarkKey { group: self.group, bundle: self.bundle, side: self.side }
    }
}

/// Landmarks with unique `(group, bundle, side)` keys, in file order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LandmarkSet {
    landmarks: Vec<Landmark>,
}

#[derive(Deserialize)]
struct LandmarkFile {
    landmarks: Vec<Landmark>,
}

impl<'de> Deserialize<'de> for LandmarkSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let file = LandmarkFile::deserialize(d)?;
        LandmarkSet::new(file.landmarks).map_err(serde::de::Error::custom)
    }
}

impl LandmarkSet {
    pub fn new(landmarks: Vec<Landmark>) -> Result<Self, LandmarkError> {
        let mut seen = HashSet::with_capacity(landmarks.len());
        for l in &landmarks {
            if !seen.insert(l.key()) {
                return Err(LandmarkError::DuplicateKey(l.key()));
            }
            if !l.position.iter().all(|c| c.is_finite()) {
                return Err(LandmarkError::NonFinite(l.key()));
            }
        }
        Ok(Self { landmarks })
    }

    pub fn landmarks(&self) -> &[Landmark] {
        &self.landmarks
    }

    pub fn len(&self) -> usize {
        self.landmarks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.landmarks.is_empty()
    }

    pub fn get(&self, key: LandmarkKey) -> Option<&Landmark> {
        self.landmarks.iter().find(|l| l.key() == key)
    }

    pub fn groups(&self) -> Vec<LigamentGroup> {
        let mut g: Vec<_> = self.landmarks.iter().map(|l| l.group).collect();
        g.sort();
        g.dedup();
        g
    }

    pub fn count(&self, status: Status) -> usize {
        self.landmarks.iter().filter(|l| l.status == status).count()
    }

    /// Moves every landmark through `f` and stamps it with `status`.
    pub fn map_positions(&self, status: Status, f: impl Fn(&Point3<f64>) -> Point3<f64>) -> LandmarkSet {
        LandmarkSet {
            landmarks: self.landmarks.iter().map(|l| Landmark { position: f(&l.position), status, ..*l }).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("landmark sets always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, LandmarkError> {
        serde_json::from_str(text).map_err(|e| LandmarkError::Parse(e.to_string()))
    }
}

/// Per-group and per-(group, side) mean positions.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupStats {
    pub by_group: BTreeMap<LigamentGroup, Point3<f64>>,
    pub by_group_side: BTreeMap<(LigamentGroup, Side), Point3<f64>>,
}

pub fn landmark_group_stats(set: &LandmarkSet) -> Result<GroupStats, LandmarkError> {
    if set.is_empty() {
        return Err(LandmarkError::EmptySet);
    }
    let mut g: BTreeMap<LigamentGroup, (Vector3<f64>, usize)> = BTreeMap::new();
    let mut gs: BTreeMap<(LigamentGroup, Side), (Vector3<f64>, usize)> = BTreeMap::new();
    for l in set.landmarks() {
        let e = g.entry(l.group).or_insert((Vector3::zeros(), 0));
        e.0 += l.position.coords;
        e.1 += 1;
        let e = gs.entry((l.group, l.side)).or_insert((Vector3::zeros(), 0));
        e.0 += l.position.coords;
        e.1 += 1;
    }
    let mean = |(s, n): (Vector3<f64>, usize)| Point3::from(s / n as f64);
    Ok(GroupStats {
        by_group: g.into_iter().map(|(k, v)| (k, mean(v))).collect(),
        by_group_side: gs.into_iter().map(|(k, v)| (k, mean(v))).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lm(group: LigamentGroup, bundle: u32, side: Side, p: [f64; 3]) -> Landmark {
        Landmark { group, bundle, side, position: Point3::from(p), status: Status::Annotated }
    }

    #[test]
    fn json_schema() {
        let set = LandmarkSet::new(vec![
            lm(LigamentGroup::All, 0, Side::Midline, [1.0, 2.0, 3.0]),
            lm(LigamentGroup::Itl, 2, Side::Left, [0.5, 0.0, -1.0]),
        ])
        .unwrap();
        let text = set.to_json();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let first = &v["landmarks"][0];
        assert_eq!(first["group"], "ALL");
        assert_eq!(first["side"], "midline");
        assert_eq!(first["status"], "annotated");
        assert_eq!(first["xyz"], serde_json::json!([1.0, 2.0, 3.0]));
        assert_eq!(LandmarkSet::from_json(&text).unwrap(), set);
        let fb = serde_json::to_value(Status::FallbackNearestVertex).unwrap();
        assert_eq!(fb, "fallback_nearest_vertex");
    }

    #[test]
    fn rejects_duplicates_and_unknown_groups() {
        let dup = vec![lm(LigamentGroup::Cl, 1, Side::Left, [0.0; 3]), lm(LigamentGroup::Cl, 1, Side::Left, [1.0; 3])];
        assert!(matches!(LandmarkSet::new(dup), Err(LandmarkError::DuplicateKey(_))));
        let bad = r#"{"landmarks":[{"group":"XYZ","bundle":0,"side":"left","xyz":[0,0,0],"status":"annotated"}]}"#;
        assert!(LandmarkSet::from_json(bad).is_err());
        let dup = r#"{"landmarks":[
            {"group":"SSL","bundle":0,"side":"midline","xyz":[0,0,0],"status":"annotated"},
            {"group":"SSL","bundle":0,"side":"midline","xyz":[1,0,0],"status":"annotated"}]}"#;
        assert!(LandmarkSet::from_json(dup).unwrap_err().to_string().contains("duplicate"));
    }

    #[test]
    fn group_centroids() {
        let set = LandmarkSet::new(vec![
            lm(LigamentGroup::All, 0, Side::Midline, [0.0, 0.0, 0.0]),
            lm(LigamentGroup::All, 1, Side::Midline, [2.0, 0.0, 0.0]),
            lm(LigamentGroup::Ssl, 0, Side::Midline, [5.0, 6.0, 7.0]),
            lm(LigamentGroup::Cl, 0, Side::Left, [1.0, 0.0, 0.0]),
            lm(LigamentGroup::Cl, 0, Side::Right, [-3.0, 0.0, 0.0]),
        ])
        .unwrap();
        let s = landmark_group_stats(&set).unwrap();
        assert_eq!(s.by_group[&LigamentGroup::All], Point3::new(1.0, 0.0, 0.0));
        assert_eq!(s.by_group[&LigamentGroup::Ssl], Point3::new(5.0, 6.0, 7.0));
        assert_eq!(s.by_group[&LigamentGroup::Cl], Point3::new(-1.0, 0.0, 0.0));
        assert_eq!(s.by_group_side[&(LigamentGroup::Cl, Side::Right)], Point3::new(-3.0, 0.0, 0.0));
        assert_eq!(landmark_group_stats(&LandmarkSet::new(vec![]).unwrap()), Err(LandmarkError::EmptySet));
    }

    #[test]
    fn group_names_parse() {
        for g in LigamentGroup::ALL_GROUPS {
            assert_eq!(g.as_str().parse::<LigamentGroup>(), Ok(g));
            assert_eq!(serde_json::to_value(g).unwrap(), g.as_str());
        }
    }
}
