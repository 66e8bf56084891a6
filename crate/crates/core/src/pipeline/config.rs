//! Pipeline configuration and its flat `key = value` text form.
//!
//! ```text
//! # comments start with '#'
//! poi_scheme = poi15          # poi15 | poi8
//! with_scale = true
//! edge_radius = auto          # auto | length in mm
//! seed = 0
//! rules = default             # default | centroid (preset, applied first)
//! rule.SSL.axis = LR          # AP | LR | SI
//! rule.SSL.radius = 5.0
//! rule.SSL.anchor = landmark  # group | side | landmark
//! hint.ap = 0,1,0             # all three hints or none
//! hint.lr = 1,0,0
//! hint.si = 0,0,1
//! atlas_mesh = atlas.obj
//! atlas_landmarks = atlas.json
//! target_mesh = patient.stl
//! out = result.json
//! ```

use crate::edges::EdgeRadius;
use crate::frame::{FrameAxis, OrientationHints};
use crate::landmarks::LigamentGroup;
use crate::poi::PoiScheme;
use crate::projection::{PlaneAnchor, RuleTable};
use nalgebra::Vector3;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub poi_scheme: PoiScheme,
    /// Estimate a uniform scale during registration (otherwise rigid).
    pub with_scale: bool,
    pub edge_radius: EdgeRadius,
    pub rules: RuleTable,
    /// Seed for anything random (synthetic data, benchmarks).
    pub seed: u64,
    /// Orientation hints for both meshes, needed only for near-isotropic shapes.
    pub hints: Option<OrientationHints>,
    pub atlas_mesh: Option<PathBuf>,
    pub atlas_landmarks: Option<PathBuf>,
    pub target_mesh: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            poi_scheme: PoiScheme::Poi15,
            with_scale: true,
            edge_radius: EdgeRadius::Auto,
            rules: RuleTable::default(),
            seed: 0,
            hints: None,
            atlas_mesh: None,
            atlas_landmarks: None,
            target_mesh: None,
            out: None,
        }
    }
}

#[derive(Default)]
struct PartialHints {
    ap: Option<Vector3<f64>>,
    lr: Option<Vector3<f64>>,
    si: Option<Vector3<f64>>,
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(format!("expected a boolean, got `{v}`")),
    }
}

fn parse_vec3(v: &str) -> Result<Vector3<f64>, String> {
    let parts: Vec<f64> = v
        .split(',')
        .map(|c| c.trim().parse::<f64>().map_err(|_| format!("bad number `{}` in vector", c.trim())))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [x, y, z] => Ok(Vector3::new(x, y, z)),
        _ => Err(format!("expected three comma-separated numbers, got `{v}`")),
    }
}

impl PipelineConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line: i + 1, message: format!("expected `key = value`, got `{line}`") })?;
            entries.push((i + 1, k.trim().to_string(), v.trim().to_string()));
        }
        let mut cfg = Self::default();
        // The preset goes first so per-group overrides always win.
        for (line, k, v) in entries.iter().filter(|e| e.1 == "rules") {
            cfg.set(k, v).map_err(|message| ConfigError::Syntax { line: *line, message })?;
        }
        let mut hints = PartialHints::default();
        for (line, k, v) in entries.iter().filter(|e| e.1 != "rules") {
            let res = match k.strip_prefix("hint.") {
                Some(axis) => parse_vec3(v).and_then(|vec| {
                    match axis {
                        "ap" => hints.ap = Some(vec),
                        "lr" => hints.lr = Some(vec),
                        "si" => hints.si = Some(vec),
                        _ => return Err(format!("unknown hint `{k}`")),
                    }
                    Ok(())
                }),
                None => cfg.set(k, v),
            };
            res.map_err(|message| ConfigError::Syntax { line: *line, message })?;
        }
        cfg.hints = match (hints.ap, hints.lr, hints.si) {
            (None, None, None) => None,
            (Some(ap), Some(lr), Some(si)) => Some(OrientationHints { ap, lr, si }),
            _ => return Err(ConfigError::Invalid("orientation hints need all of hint.ap, hint.lr and hint.si".into())),
        };
        Ok(cfg)
    }

    /// Sets one key (same names as the file format, except `hint.*`).
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let path = |v: &str| Some(PathBuf::from(v));
        match key {
            "poi_scheme" => self.poi_scheme = value.parse()?,
            "with_scale" => self.with_scale = parse_bool(value)?,
            "edge_radius" => self.edge_radius = value.parse()?,
            "seed" => self.seed = value.parse().map_err(|_| format!("seed must be a non-negative integer, got `{value}`"))?,
            "rules" => {
                self.rules = match value.to_ascii_lowercase().as_str() {
                    "default" => RuleTable::default(),
                    "centroid" => RuleTable::centroid_planes(),
                    other => return Err(format!("unknown rule preset `{other}` (expected default or centroid)")),
                }
            }
            "atlas_mesh" => self.atlas_mesh = path(value),
            "atlas_landmarks" => self.atlas_landmarks = path(value),
            "target_mesh" => self.target_mesh = path(value),
            "out" => self.out = path(value),
            _ => {
                let rest = key.strip_prefix("rule.").ok_or_else(|| format!("unknown key `{key}`"))?;
                let (group, field) = rest.split_once('.').ok_or_else(|| format!("expected rule.<GROUP>.<field>, got `{key}`"))?;
                let group: LigamentGroup = group.parse()?;
                let rule = self.rules.get_mut(group).ok_or_else(|| format!("no rule for group {group}"))?;
                match field {
                    "axis" => rule.plane_axis = value.parse::<FrameAxis>()?,
                    "anchor" => rule.anchor = value.parse::<PlaneAnchor>()?,
                    "radius" => {
                        let r: f64 = value.parse().map_err(|_| format!("bad radius `{value}`"))?;
                        if !(r > 0.0 && r.is_finite()) {
                            return Err(format!("search radius must be positive, got {r}"));
                        }
                        rule.search_radius = r;
                    }
                    other => return Err(format!("unknown rule field `{other}` (expected axis, radius or anchor)")),
                }
            }
        }
        Ok(())
    }

    /// Renders the configuration in the file format; parsing the result
    /// yields an equal configuration.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "poi_scheme = {}", self.poi_scheme);
        let _ = writeln!(s, "with_scale = {}", self.with_scale);
        let _ = writeln!(s, "edge_radius = {}", self.edge_radius);
        let _ = writeln!(s, "seed = {}", self.seed);
        for r in self.rules.rules() {
            let axis = match r.plane_axis {
                FrameAxis::Ap => "AP",
                FrameAxis::Lr => "LR",
                FrameAxis::Si => "SI",
            };
            let _ = writeln!(s, "rule.{}.axis = {axis}", r.group);
            let _ = writeln!(s, "rule.{}.radius = {}", r.group, r.search_radius);
            let _ = writeln!(s, "rule.{}.anchor = {}", r.group, r.anchor);
        }
        if let Some(h) = &self.hints {
            for (name, v) in [("ap", h.ap), ("lr", h.lr), ("si", h.si)] {
                let _ = writeln!(s, "hint.{name} = {},{},{}", v.x, v.y, v.z);
            }
        }
        for (name, p) in [("atlas_mesh", &self.atlas_mesh), ("atlas_landmarks", &self.atlas_landmarks), ("target_mesh", &self.target_mesh), ("out", &self.out)] {
            if let Some(p) = p {
                let _ = writeln!(s, "{name} = {}", p.display());
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_example() {
        let text = "
            # sample
            poi_scheme = poi8
            with_scale = false
            edge_radius = 2.5
            seed = 11
            rule.SSL.axis = SI
            rule.SSL.radius = 7.5   # wider window
            rule.CL.anchor = side
            rules = centroid
            hint.ap = 0,1,0
            hint.lr = 1,0,0
            hint.si = 0,0,1
            target_mesh = p.stl
        ";
        let c = PipelineConfig::parse(text).unwrap();
        assert_eq!(c.poi_scheme, PoiScheme::Poi8);
        assert!(!c.with_scale);
        assert_eq!(c.edge_radius, EdgeRadius::Mm(2.5));
        assert_eq!(c.seed, 11);
        // Preset applies before overrides even though it appears later.
        let ssl = c.rules.get(LigamentGroup::Ssl).unwrap();
        assert_eq!((ssl.plane_axis, ssl.search_radius), (FrameAxis::Si, 7.5));
        assert_eq!(c.rules.get(LigamentGroup::All).unwrap().anchor, PlaneAnchor::GroupCentroid);
        assert_eq!(c.rules.get(LigamentGroup::Cl).unwrap().anchor, PlaneAnchor::SideCentroid);
        assert_eq!(c.hints.unwrap().si, Vector3::z());
        assert_eq!(c.target_mesh, Some(PathBuf::from("p.stl")));
    }

    #[test]
    fn round_trip() {
        let mut c = PipelineConfig::parse("rule.ITL.radius = 3.25\npoi_scheme = poi8\nout = x.json").unwrap();
        c.hints = Some(OrientationHints { ap: Vector3::y(), lr: Vector3::x(), si: Vector3::z() });
        assert_eq!(PipelineConfig::parse(&c.to_config_string()).unwrap(), c);
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert_eq!(
            PipelineConfig::parse("seed = 1\nbogus = 3"),
            Err(ConfigError::Syntax { line: 2, message: "unknown key `bogus`".into() })
        );
        assert!(matches!(PipelineConfig::parse("\n\nrule.ALL.radius = 0"), Err(ConfigError::Syntax { line: 3, .. })));
        assert!(matches!(PipelineConfig::parse("rule.XYZ.axis = AP"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(PipelineConfig::parse("no equals sign"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(PipelineConfig::parse("hint.ap = 0,1,0"), Err(ConfigError::Invalid(_))));
        assert!(PipelineConfig::parse("edge_radius = -2").is_err());
    }
}
