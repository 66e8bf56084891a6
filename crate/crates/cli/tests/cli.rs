use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::TempDir;

fn ligdetect(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ligdetect")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    /// Atlas plus a noisy, posed target, both at a coarse tessellation.
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let f = Fixture { dir };
        let o = ligdetect(&[
            "gen-synth", "--edge-length", "2", "--mesh-out", s(&f.path("atlas.obj")),
            "--landmarks-out", s(&f.path("atlas.json")), "--pois-out", s(&f.path("atlas_pois.json")),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let o = ligdetect(&[
            "gen-synth", "--edge-length", "2", "--seed", "3", "--noise", "0.5", "--random-pose",
            "--mesh-out", s(&f.path("target.stl")), "--landmarks-out", s(&f.path("truth.json")),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        f
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn detect(&self, out: &str, extra: &[&str]) -> Output {
        let mut args = vec![
            "detect", "--atlas", s(&self.path("atlas.obj")).to_owned().leak(),
            "--atlas-landmarks", s(&self.path("atlas.json")).to_owned().leak(),
            "--target", s(&self.path("target.stl")).to_owned().leak(),
            "--out", s(&self.path(out)).to_owned().leak(),
        ];
        args.extend_from_slice(extra);
        ligdetect(&args)
    }
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&ligdetect(&["--help"])), 0);
    assert_eq!(code(&ligdetect(&["detect", "--help"])), 0);
    assert_eq!(code(&ligdetect(&[])), 1);
    assert_eq!(code(&ligdetect(&["frobnicate"])), 1);
    assert_eq!(code(&ligdetect(&["eval", "--detected", "x.json"])), 1);
    assert_eq!(code(&ligdetect(&["bench", "--suite", "nope"])), 1);
    assert_eq!(code(&ligdetect(&["bench", "--seeds", "5..1"])), 1);
    assert_eq!(code(&ligdetect(&["gen-synth", "--mesh-out", "x.obj", "--noise", "-1"])), 1);
}

#[test]
fn detect_writes_landmarks_and_timings() {
    let f = Fixture::new();
    let o = f.detect("out.json", &["--timings", s(&f.path("t.json")).to_owned().leak()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = json(&f.path("out.json"));
    assert_eq!(out["landmarks"].as_array().unwrap().len(), 66);
    assert!(out["transform"]["s"].as_f64().unwrap() > 0.0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("timings: frame"));
    assert!(json(&f.path("t.json"))["total_s"].as_f64().unwrap() > 0.0);

    let o = ligdetect(&["eval", "--detected", s(&f.path("out.json")), "--truth", s(&f.path("truth.json"))]);
    assert_eq!(code(&o), 0);
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(report["rmse_mm"].as_f64().unwrap() < 3.0);
    assert_eq!(report["per_group_mm"].as_object().unwrap().len(), 7);
}

#[test]
fn detect_is_byte_identical_across_runs_and_threads() {
    let f = Fixture::new();
    assert_eq!(code(&f.detect("a.json", &[])), 0);
    assert_eq!(code(&f.detect("b.json", &["--threads", "1"])), 0);
    assert_eq!(fs::read(f.path("a.json")).unwrap(), fs::read(f.path("b.json")).unwrap());
}

#[test]
fn staged_commands_match_detect() {
    let f = Fixture::new();
    assert_eq!(code(&f.detect("full.json", &[])), 0);
    for (mesh, out) in [("atlas.obj", "ap.json"), ("target.stl", "tp.json")] {
        let o = ligdetect(&["pois", "--mesh", s(&f.path(mesh)), "--out", s(&f.path(out))]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let o = ligdetect(&[
        "register", "--atlas-pois", s(&f.path("ap.json")), "--target-pois", s(&f.path("tp.json")),
        "--landmarks", s(&f.path("atlas.json")), "--out", s(&f.path("reg.json")),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = ligdetect(&["edges", "--mesh", s(&f.path("target.stl")), "--out", s(&f.path("e.csv"))]);
    assert_eq!(code(&o), 0);
    let o = ligdetect(&[
        "project", "--target", s(&f.path("target.stl")), "--landmarks", s(&f.path("reg.json")),
        "--edges", s(&f.path("e.csv")), "--out", s(&f.path("proj.json")),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    // Intermediate JSON files round-trip floats to within an ulp or so.
    let (staged, full) = (json(&f.path("proj.json")), json(&f.path("full.json")));
    let (staged, full) = (staged["landmarks"].as_array().unwrap(), full["landmarks"].as_array().unwrap());
    assert_eq!(staged.len(), full.len());
    for (a, b) in staged.iter().zip(full) {
        for k in ["group", "bundle", "side", "status"] {
            assert_eq!(a[k], b[k]);
        }
        for i in 0..3 {
            assert!((a["xyz"][i].as_f64().unwrap() - b["xyz"][i].as_f64().unwrap()).abs() < 1e-9);
        }
    }
    let (t1, t2) = (json(&f.path("reg.json")), json(&f.path("full.json")));
    assert!((t1["transform"]["s"].as_f64().unwrap() - t2["transform"]["s"].as_f64().unwrap()).abs() < 1e-12);
}

#[test]
fn edges_csv_has_one_row_per_vertex() {
    let f = Fixture::new();
    let o = ligdetect(&["edges", "--mesh", s(&f.path("atlas.obj")), "--edge-radius", "3"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let vertices = fs::read_to_string(f.path("atlas.obj")).unwrap().lines().filter(|l| l.starts_with("v ")).count();
    assert_eq!(text.lines().next(), Some("vertex_index,value"));
    assert_eq!(text.lines().count(), vertices + 1);

    let o = ligdetect(&["edges", "--mesh", s(&f.path("atlas.obj")), "--out", s(&f.path("edges.ply"))]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let ply = fs::read_to_string(f.path("edges.ply")).unwrap();
    assert!(ply.contains("property double edge") || ply.contains("property float edge"), "{}", &ply[..300]);
    assert!(ply.contains(&format!("element vertex {vertices}")));
}

#[test]
fn config_file_supplies_paths_and_settings() {
    let f = Fixture::new();
    let cfg = f.path("run.cfg");
    fs::write(
        &cfg,
        format!(
            "# full run from a config file\npoi_scheme = poi8\nrule.SSL.radius = 6\natlas_mesh = {}\natlas_landmarks = {}\ntarget_mesh = {}\nout = {}\n",
            s(&f.path("atlas.obj")),
            s(&f.path("atlas.json")),
            s(&f.path("target.stl")),
            s(&f.path("cfg_out.json"))
        ),
    )
    .unwrap();
    let o = ligdetect(&["detect", "--config", s(&cfg)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(&f.path("cfg_out.json"))["landmarks"].as_array().unwrap().len(), 66);

    fs::write(&cfg, "poi_scheme = poi9\n").unwrap();
    let o = ligdetect(&["detect", "--config", s(&cfg)]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains(":1:"));
}

#[test]
fn data_errors_exit_with_two() {
    let f = Fixture::new();
    // Missing input file.
    let o = ligdetect(&["detect", "--atlas", "/nonexistent.obj", "--atlas-landmarks", s(&f.path("atlas.json")), "--target", s(&f.path("target.stl"))]);
    assert_eq!(code(&o), 2);
    // Required input given neither as flag nor in the config: usage.
    let o = ligdetect(&["detect", "--atlas", s(&f.path("atlas.obj")), "--atlas-landmarks", s(&f.path("atlas.json"))]);
    assert_eq!(code(&o), 1);
    // Corrupt mesh and landmark files.
    fs::write(f.path("bad.obj"), "v 0 0 0\nv 1 0 0\nf 1 2 7\n").unwrap();
    assert_eq!(code(&ligdetect(&["pois", "--mesh", s(&f.path("bad.obj"))])), 2);
    fs::write(f.path("bad.json"), "{\"landmarks\": 3}").unwrap();
    assert_eq!(code(&ligdetect(&["eval", "--detected", s(&f.path("bad.json")), "--truth", s(&f.path("truth.json"))])), 2);
    // Landmark sets with different keys.
    assert_eq!(code(&ligdetect(&["eval", "--detected", s(&f.path("atlas_pois.json")), "--truth", s(&f.path("truth.json"))])), 2);
}

#[test]
fn bench_prints_a_timing_table() {
    let o = ligdetect(&["bench", "--suite", "default", "--seeds", "0..1", "--edge-length", "2.5"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    for col in ["frame_s", "edges_s", "proj_s", "total_s", "rmse_mm"] {
        assert!(lines[0].contains(col));
    }
    let o = ligdetect(&["bench", "--suite", "fracture", "--seeds", "2", "--edge-length", "2.5", "--json"]);
    assert_eq!(code(&o), 0);
    let rows: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(rows[0]["seed"], 2);
    assert!(rows[0]["report"]["avg_mm"].is_number());
}
