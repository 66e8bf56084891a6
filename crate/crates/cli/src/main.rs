//! `ligdetect`: ligament landmark detection on vertebra meshes.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

mod commands;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "ligdetect", version, about = "Transfer spinal-ligament landmarks from an atlas vertebra onto patient meshes")]
struct Cli {
    /// Worker threads for the parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Full pipeline: atlas mesh and landmarks onto a target mesh.
    Detect(DetectArgs),
    /// Anatomical frame and points of interest of one mesh.
    Pois(PoisArgs),
    /// Similarity fit between two PoI files, optionally applied to landmarks.
    Register(RegisterArgs),
    /// Per-vertex edge values as CSV, or as a PLY vertex property.
    Edges(EdgesArgs),
    /// Snap registered landmarks onto a mesh.
    Project(ProjectArgs),
    /// Compare detected landmarks with ground truth.
    Eval(EvalArgs),
    /// Write a synthetic vertebra with ground-truth landmarks and PoIs.
    GenSynth(GenSynthArgs),
    /// Run a synthetic suite and print per-stage timings.
    Bench(BenchArgs),
}

/// Pipeline settings: a config file plus per-flag overrides.
#[derive(Debug, Args, Default)]
struct ConfigArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// PoI scheme: poi15 or poi8.
    #[arg(long)]
    poi_scheme: Option<String>,
    /// Fit a rigid transform instead of a similarity.
    #[arg(long)]
    rigid: bool,
    /// Edge neighbourhood radius in mm, or `auto`.
    #[arg(long)]
    edge_radius: Option<String>,
    /// Projection rule preset: default or centroid.
    #[arg(long)]
    rules: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Any configuration key, e.g. `--set rule.SSL.radius=7.5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Args)]
struct DetectArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Atlas mesh (OBJ, ASCII PLY or binary STL).
    #[arg(long)]
    atlas: Option<PathBuf>,
    /// Atlas landmark JSON.
    #[arg(long)]
    atlas_landmarks: Option<PathBuf>,
    /// Target mesh.
    #[arg(long)]
    target: Option<PathBuf>,
    /// Result JSON (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the stage timings as JSON.
    #[arg(long)]
    timings: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PoisArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    mesh: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RegisterArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// PoIs detected on the atlas.
    #[arg(long)]
    atlas_pois: PathBuf,
    /// PoIs detected on the target.
    #[arg(long)]
    target_pois: PathBuf,
    /// Landmarks to move with the fitted transform.
    #[arg(long)]
    landmarks: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EdgesArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    mesh: PathBuf,
    /// CSV output, or a PLY mesh with an `edge` property when it ends in `.ply`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ProjectArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Mesh to project onto.
    #[arg(long)]
    target: PathBuf,
    /// Registered landmarks.
    #[arg(long)]
    landmarks: PathBuf,
    /// Precomputed edge values (CSV from `edges`); computed when absent.
    #[arg(long)]
    edges: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    detected: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenSynthArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Target triangle edge length in mm.
    #[arg(long, default_value_t = 1.5)]
    edge_length: f64,
    /// Gaussian vertex noise sigma in mm.
    #[arg(long)]
    noise: Option<f64>,
    /// Superior endplate fracture depth in mm.
    #[arg(long)]
    fracture: Option<f64>,
    /// Posterior element tilt in degrees.
    #[arg(long)]
    tilt: Option<f64>,
    /// Apply a random similarity pose drawn from the seed.
    #[arg(long)]
    random_pose: bool,
    /// Mesh output; format from the extension (obj, ply, stl).
    #[arg(long)]
    mesh_out: PathBuf,
    #[arg(long)]
    landmarks_out: Option<PathBuf>,
    #[arg(long)]
    pois_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// default, fracture or posterior.
    #[arg(long, default_value = "default")]
    suite: String,
    /// Seed range `a..b` (inclusive) or a single seed.
    #[arg(long, default_value = "0..9")]
    seeds: String,
    #[arg(long, default_value_t = 1.5)]
    edge_length: f64,
    /// Print the results as JSON instead of a table.
    #[arg(long)]
    json: bool,
}

/// Marks an error as the caller's fault (exit code 1). Anything else that
/// escapes a command is a data error (exit code 2).
#[derive(Debug)]
pub(crate) struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub(crate) fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().expect("global pool is configured once");
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}\n\nRun with --help for usage.");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(2)
        }
    }
}

/// Joins the error chain, skipping causes whose text the previous message
/// already includes.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    let mut last = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !last.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
        last = text;
    }
    out
}
