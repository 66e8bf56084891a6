use crate::{usage, BenchArgs, Command, ConfigArgs, DetectArgs, EdgesArgs, EvalArgs, GenSynthArgs, PoisArgs, ProjectArgs, RegisterArgs};
use anyhow::{Context, Result};
use ligdetect::edges::{compute_edge_values, EdgeField};
use ligdetect::frame::compute_frame;
use ligdetect::landmarks::{LandmarkSet, Status};
use ligdetect::mesh::{load_mesh, save_obj, save_ply_ascii, save_stl_binary, LoadOptions, MeshFormat, SpatialIndex, TriangleMesh};
use ligdetect::pipeline::suite::{Suite, SuiteKind};
use ligdetect::pipeline::synth::{gen_synthetic, random_pose, Deformation, SyntheticSpec};
use ligdetect::pipeline::{evaluate, run_pipeline, PipelineConfig, StageTimings};
use ligdetect::poi::{detect_pois, PoiSet};
use ligdetect::projection::project_landmarks;
use ligdetect::registration::{horn_align, match_by_name, TransformJson};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

pub(crate) fn run(command: Command) -> Result<()> {
    match command {
        Command::Detect(a) => detect(a),
        Command::Pois(a) => pois(a),
        Command::Register(a) => register(a),
        Command::Edges(a) => edges(a),
        Command::Project(a) => project(a),
        Command::Eval(a) => eval(a),
        Command::GenSynth(a) => gen_synth(a),
        Command::Bench(a) => bench(a),
    }
}

/// Config file first, then the dedicated flags, then `--set` pairs; later
/// settings win.
fn load_config(args: &ConfigArgs) -> Result<PipelineConfig> {
    let mut text = match &args.config {
        Some(path) => fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?,
        None => String::new(),
    };
    let file_lines = text.lines().count();
    text.push('\n');
    let mut push = |k: &str, v: &str| text.push_str(&format!("{k} = {v}\n"));
    if let Some(v) = &args.poi_scheme {
        push("poi_scheme", v);
    }
    if args.rigid {
        push("with_scale", "false");
    }
    if let Some(v) = &args.edge_radius {
        push("edge_radius", v);
    }
    if let Some(v) = &args.rules {
        push("rules", v);
    }
    if let Some(v) = args.seed {
        push("seed", &v.to_string());
    }
    for kv in &args.overrides {
        let (k, v) = kv.split_once('=').ok_or_else(|| usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        push(k.trim(), v.trim());
    }
    PipelineConfig::parse(&text).map_err(|e| match e {
        ligdetect::pipeline::ConfigError::Syntax { line, message } if line > file_lines => usage(format!("command-line setting: {message}")),
        ligdetect::pipeline::ConfigError::Syntax { line, message } => {
            let name = args.config.as_deref().map(|p| p.display().to_string()).unwrap_or_default();
            usage(format!("{name}:{line}: {message}"))
        }
        other => usage(other.to_string()),
    })
}

fn read_mesh(path: &Path) -> Result<TriangleMesh> {
    let (mesh, report) =
        load_mesh(path, MeshFormat::Auto, &LoadOptions::default()).with_context(|| format!("loading mesh {}", path.display()))?;
    if report.dropped_degenerate > 0 {
        log::warn!("{}: dropped {} degenerate faces", path.display(), report.dropped_degenerate);
    }
    log::info!("{}: {} vertices, {} faces", path.display(), mesh.vertex_count(), mesh.face_count());
    Ok(mesh)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_landmarks(path: &Path) -> Result<LandmarkSet> {
    LandmarkSet::from_json(&read_text(path)?).with_context(|| format!("parsing landmarks {}", path.display()))
}

fn read_pois(path: &Path) -> Result<PoiSet> {
    PoiSet::from_json(&read_text(path)?).map_err(anyhow::Error::msg).with_context(|| format!("parsing PoIs {}", path.display()))
}

/// Writes `text` to `out`, or to stdout when no path is given.
fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            let written = stdout.write_all(text.as_bytes()).and_then(|()| if text.ends_with('\n') { Ok(()) } else { writeln!(stdout) });
            match written {
                // A reader such as `head` closed the pipe early.
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
                r => Ok(r?),
            }
        }
    }
}

fn require(value: Option<PathBuf>, flag: &str, key: &str) -> Result<PathBuf> {
    value.ok_or_else(|| usage(format!("missing {flag} (or `{key}` in the config file)")))
}

fn timing_summary(t: &StageTimings) -> String {
    format!(
        "timings: frame {:.4} s, pois {:.4} s, registration {:.4} s, edges {:.4} s, projection {:.4} s, total {:.4} s",
        t.frame_s, t.poi_s, t.registration_s, t.edges_s, t.projection_s, t.total_s
    )
}

fn detect(a: DetectArgs) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let atlas_path = require(a.atlas.or(cfg.atlas_mesh.clone()), "--atlas", "atlas_mesh")?;
    let landmarks_path = require(a.atlas_landmarks.or(cfg.atlas_landmarks.clone()), "--atlas-landmarks", "atlas_landmarks")?;
    let target_path = require(a.target.or(cfg.target_mesh.clone()), "--target", "target_mesh")?;
    let out = a.out.or(cfg.out.clone());

    let atlas = read_mesh(&atlas_path)?;
    let atlas_landmarks = read_landmarks(&landmarks_path)?;
    let target = read_mesh(&target_path)?;
    let result = run_pipeline(&atlas, &atlas_landmarks, &target, &cfg)?;

    emit(out.as_deref(), &result.to_json())?;
    if let Some(path) = &a.timings {
        fs::write(path, serde_json::to_string_pretty(&result.timings)?).with_context(|| format!("writing {}", path.display()))?;
    }
    let fallbacks = result.landmarks.count(Status::FallbackNearestVertex);
    eprintln!("{} landmarks, {fallbacks} nearest-vertex fallbacks, scale {:.4}", result.landmarks.len(), result.transform.scale);
    eprintln!("{}", timing_summary(&result.timings));
    Ok(())
}

fn pois(a: PoisArgs) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let mesh = read_mesh(&a.mesh)?;
    let frame = compute_frame(&mesh, cfg.hints.as_ref())?;
    log::info!("frame: {frame:?}");
    let pois = detect_pois(&mesh, &frame, cfg.poi_scheme)?;
    emit(a.out.as_deref(), &pois.to_json())
}

fn register(a: RegisterArgs) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let src = read_pois(&a.atlas_pois)?;
    let dst = read_pois(&a.target_pois)?;
    let transform = horn_align(&match_by_name(&src, &dst)?, cfg.with_scale)?;
    let text = match &a.landmarks {
        Some(path) => {
            let registered = read_landmarks(path)?.map_positions(Status::Registered, |p| transform.apply_point(p));
            let mut doc = serde_json::to_value(&registered)?;
            doc["transform"] = serde_json::to_value(TransformJson::from(&transform))?;
            serde_json::to_string_pretty(&doc)?
        }
        None => transform.to_json(),
    };
    emit(a.out.as_deref(), &text)
}

fn edges(a: EdgesArgs) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let mesh = read_mesh(&a.mesh)?;
    let field = compute_edge_values(&mesh, &SpatialIndex::build(&mesh), cfg.edge_radius)?;
    log::info!("edge radius {:.4} mm", field.radius_used);
    if let Some(path) = a.out.as_deref().filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("ply"))) {
        return save_ply_ascii(&mesh, path, Some(("edge", &field.values))).with_context(|| format!("writing {}", path.display()));
    }
    let mut csv = Vec::new();
    field.write_csv(&mut csv)?;
    emit(a.out.as_deref(), &String::from_utf8(csv)?)
}

fn project(a: ProjectArgs) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let mesh = read_mesh(&a.target)?;
    let landmarks = read_landmarks(&a.landmarks)?;
    let frame = compute_frame(&mesh, cfg.hints.as_ref())?;
    let index = SpatialIndex::build(&mesh);
    let field = match &a.edges {
        Some(path) => {
            let radius = cfg.edge_radius.resolve(&mesh)?;
            EdgeField::from_csv(&read_text(path)?, radius).with_context(|| format!("parsing edge values {}", path.display()))?
        }
        None => compute_edge_values(&mesh, &index, cfg.edge_radius)?,
    };
    let projected = project_landmarks(&mesh, &index, &frame, &field, &landmarks, &cfg.rules)?;
    emit(a.out.as_deref(), &projected.to_json())
}

fn eval(a: EvalArgs) -> Result<()> {
    let detected = read_landmarks(&a.detected)?;
    let truth = read_landmarks(&a.truth)?;
    let report = evaluate(&detected, &truth)?;
    emit(a.out.as_deref(), &report.to_json())
}

fn save_mesh(mesh: &TriangleMesh, path: &Path) -> Result<()> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    match ext.as_str() {
        "obj" => save_obj(mesh, path),
        "ply" => save_ply_ascii(mesh, path, None),
        "stl" => save_stl_binary(mesh, path),
        _ => return Err(usage(format!("cannot infer mesh format of {} (use .obj, .ply or .stl)", path.display()))),
    }
    .with_context(|| format!("writing {}", path.display()))
}

fn gen_synth(a: GenSynthArgs) -> Result<()> {
    let mut deformations = Vec::new();
    if let Some(degrees) = a.tilt {
        deformations.push(Deformation::PosteriorTilt { degrees });
    }
    if let Some(depth) = a.fracture {
        deformations.push(Deformation::EndplateFracture { depth });
    }
    if let Some(sigma) = a.noise {
        deformations.push(Deformation::Noise { sigma });
    }
    let mut spec = SyntheticSpec { edge_length: a.edge_length, deformations, seed: a.seed, ..SyntheticSpec::default() };
    if a.random_pose {
        spec.pose = random_pose(&mut ChaCha8Rng::seed_from_u64(a.seed), 100.0, 0.9, 1.1);
    }
    spec.validate().map_err(|e| usage(e.to_string()))?;
    let v = gen_synthetic(&spec)?;
    save_mesh(&v.mesh, &a.mesh_out)?;
    if let Some(path) = &a.landmarks_out {
        fs::write(path, v.landmarks.to_json()).with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = &a.pois_out {
        fs::write(path, v.pois.to_json()).with_context(|| format!("writing {}", path.display()))?;
    }
    eprintln!("{} vertices, {} faces, {} landmarks", v.mesh.vertex_count(), v.mesh.face_count(), v.landmarks.len());
    Ok(())
}

/// Parses `a..b` (inclusive), `a..=b` or a single seed.
fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || usage(format!("--seeds expects `a..b` or a single number, got `{s}`"));
    let num = |t: &str| t.trim().parse::<u64>().map_err(|_| bad());
    match s.split_once("..") {
        Some((lo, hi)) => {
            let (lo, hi) = (num(lo)?, num(hi.trim_start_matches('='))?);
            if lo > hi {
                return Err(bad());
            }
            Ok((lo..=hi).collect())
        }
        None => Ok(vec![num(s)?]),
    }
}

fn bench(a: BenchArgs) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let kind: SuiteKind = a.suite.parse().map_err(usage)?;
    let seeds = parse_seeds(&a.seeds)?;
    let suite = Suite::new(a.edge_length).map_err(|e| usage(e.to_string()))?;
    let results = suite.bench(kind, seeds, &cfg)?;
    if a.json {
        let rows: Vec<serde_json::Value> = results
            .iter()
            .map(|r| {
                serde_json::json!({
                    "suite": r.kind.to_string(),
                    "seed": r.seed,
                    "vertices": r.vertex_count,
                    "fallbacks": r.fallbacks,
                    "timings": r.timings,
                    "report": r.report,
                })
            })
            .collect();
        emit(None, &serde_json::to_string_pretty(&rows)?)
    } else {
        emit(None, &ligdetect::pipeline::suite::timing_table(&results))
    }
}
