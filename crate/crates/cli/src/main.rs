//! `calib`: headless calibration pipeline over project documents.
//!
//! Exit codes: 0 success, 1 verification failed, 2 invalid input or
//! missing prerequisite, 3 non-convergence, 4 I/O failure. Failures print
//! `calib: <reason_code>: <message>` on standard error.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use calib_core::canonical;
use calib_core::export::{export_document, export_matrices};
use calib_core::project::{load_project, save_project, Project, ProjectError};
use calib_core::stage2::PlacementTransform;
use calib_core::synth::{cameras_around, fixture_project, AnnotationOption};
use calib_core::verify::verify_project;
use calib_core::workflow::{camera_mut, place_camera, run_stage1, ErrorClass, WorkflowError};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use serde_json::json;

#[derive(Parser)]
#[command(name = "calib", version, about = "Two-stage camera calibration on project documents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a project document and every camera annotation in it.
    Validate {
        #[arg(long)]
        project: PathBuf,
    },
    /// Solve roll, pitch and focal length from a camera's annotation.
    Stage1 {
        #[arg(long)]
        project: PathBuf,
        #[arg(long)]
        camera: String,
    },
    /// Record a floor placement for a camera that has completed stage 1.
    Place {
        #[arg(long)]
        project: PathBuf,
        #[arg(long)]
        camera: String,
        /// Translation in meters.
        #[arg(long, allow_hyphen_values = true)]
        dx: f64,
        #[arg(long, allow_hyphen_values = true)]
        dy: f64,
        #[arg(long, allow_hyphen_values = true)]
        scale: f64,
        /// Rotation about the vertical axis, radians unless `--deg`.
        #[arg(long, allow_hyphen_values = true)]
        theta: f64,
        #[arg(long)]
        deg: bool,
        /// Print the resulting pose without writing the document.
        #[arg(long)]
        dry_run: bool,
    },
    /// Run the self-checks and print a JSON report.
    Verify {
        #[arg(long)]
        project: PathBuf,
    },
    /// Print the calibration of every fully calibrated camera.
    Export {
        #[arg(long)]
        project: PathBuf,
        #[arg(long, value_enum)]
        format: Format,
    },
    /// Write a synthetic annotated project and the ground truth behind it.
    Fixture {
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        cameras: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = FloorOption::Parallel)]
        option: FloorOption,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Matrix,
    Document,
}

#[derive(Clone, Copy, ValueEnum)]
enum FloorOption {
    /// Parallel floor lines plus a perpendicular pair.
    Parallel,
    /// Equal-length floor segments.
    Equal,
}

struct Failure {
    exit: u8,
    code: &'static str,
    message: String,
}

impl Failure {
    fn validation(code: &'static str, message: impl Into<String>) -> Self {
        Self { exit: 2, code, message: message.into() }
    }
}

impl From<WorkflowError> for Failure {
    fn from(e: WorkflowError) -> Self {
        let exit = match e.class() {
            ErrorClass::Convergence => 3,
            ErrorClass::Validation | ErrorClass::Precondition | ErrorClass::NotFound => 2,
        };
        Self { exit, code: e.code(), message: e.to_string() }
    }
}

impl From<ProjectError> for Failure {
    fn from(e: ProjectError) -> Self {
        let (exit, code) = match &e {
            ProjectError::Io(_) => (4, "io_failure"),
            ProjectError::Parse(_) => (2, "invalid_document"),
            ProjectError::Schema(_) => (2, "unsupported_schema"),
            ProjectError::Validation { .. } => (2, "invalid_project"),
        };
        Self { exit, code, message: e.to_string() }
    }
}

type Outcome = Result<u8, Failure>;

fn print(text: &str) -> Outcome {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Failure { exit: 4, code: "io_failure", message: format!("stdout: {e}") })?;
    Ok(0)
}

/// Applies `f` to the loaded project, saves it when `write` is set, then
/// prints what `f` returned.
fn update(path: &Path, camera: &str, write: bool, f: impl FnOnce(&mut Project) -> Result<String, Failure>) -> Outcome {
    let mut project = load_project(path)?;
    camera_mut(&mut project, camera)?;
    let text = f(&mut project)?;
    if write {
        save_project(&project, path)?;
    }
    print(&text)
}

fn validate(path: &Path) -> Outcome {
    let project = load_project(path)?;
    let mut cameras = Vec::new();
    for c in &project.cameras {
        if let Some(a) = &c.annotation {
            a.validate(c.image.width, c.image.height)
                .map_err(|e| Failure::validation("invalid_annotation", format!("camera {:?}: {e}", c.id)))?;
        }
        cameras.push(json!({
            "id": c.id,
            "annotated": c.annotation.is_some(),
            "solved": c.partial.is_some(),
            "placed": c.placement.is_some(),
        }));
    }
    print(&canonical::to_string_pretty(&json!({ "name": project.name, "cameras": cameras })))
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Validate { project } => validate(&project),
        Command::Stage1 { project, camera } => update(&project, &camera, true, |p| {
            let outcome = run_stage1(camera_mut(p, &camera)?)?;
            let mut v = canonical::to_value(&outcome);
            v["camera"] = json!(camera);
            Ok(canonical::to_string_pretty(&v))
        }),
        Command::Place { project, camera, dx, dy, scale, theta, deg, dry_run } => {
            let theta = if deg { theta.to_radians() } else { theta };
            let t = PlacementTransform { dx, dy, scale, theta };
            update(&project, &camera, !dry_run, |p| {
                let outcome = place_camera(camera_mut(p, &camera)?, &t)?;
                let mut v = canonical::to_value(&outcome);
                v["camera"] = json!(camera);
                Ok(canonical::to_string_pretty(&v))
            })
        }
        Command::Verify { project } => {
            let report = verify_project(&load_project(&project)?)?;
            print(&canonical::to_string_pretty(&report))?;
            Ok(if report.passed { 0 } else { 1 })
        }
        Command::Export { project, format } => {
            let project = load_project(&project)?;
            match format {
                // Full precision: the matrix must reproduce projections exactly.
                Format::Matrix => {
                    let mut text = serde_json::to_string_pretty(&export_matrices(&project)?).expect("export serializes");
                    text.push('\n');
                    print(&text)
                }
                Format::Document => print(&canonical::to_string_pretty(&export_document(&project)?)),
            }
        }
        Command::Fixture { output, truth, cameras, seed, option } => {
            if cameras == 0 {
                return Err(Failure::validation("invalid_argument", "--cameras must be at least 1"));
            }
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let models = cameras_around(&mut rng, cameras, (0.0, 0.0), 1920, 1080);
            let option = match option {
                FloorOption::Parallel => AnnotationOption::Option1,
                FloorOption::Equal => AnnotationOption::Option2,
            };
            let (project, scenes) = fixture_project(&mut rng, "fixture", &models, option)
                .map_err(|e| Failure::validation("fixture_failure", e.to_string()))?;
            save_project(&project, &output)?;
            if let Some(path) = truth {
                let cams: serde_json::Map<String, serde_json::Value> = project
                    .cameras
                    .iter()
                    .zip(&scenes)
                    .map(|(c, s)| (c.id.clone(), json!({ "model": s.camera, "footprint": s.footprint })))
                    .collect();
                let text = serde_json::to_string_pretty(&json!({ "cameras": cams })).expect("truth serializes");
                std::fs::write(&path, text + "\n")
                    .map_err(|e| Failure { exit: 4, code: "io_failure", message: format!("{}: {e}", path.display()) })?;
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("calib: {}: {}", f.code, f.message);
            ExitCode::from(f.exit)
        }
    }
}
