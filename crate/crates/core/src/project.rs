//! Project documents: cameras with their operator inputs, an optional floor
//! plan and virtual markers.
//!
//! Only operator inputs are authoritative. The stage-1 result is cached per
//! camera together with the digest of the annotation it came from; full
//! camera models are always derived.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::annotation::{AnnotationError, AnnotationSet};
use crate::camera::CameraModel;
use crate::canonical;
use crate::distortion::DistortionModel;
use crate::stage1::{solve_partial, PartialCalibration, Stage1Error};
use crate::stage2::{apply_placement, assemble_full_calibration, PlacementTransform, Stage2Error, VirtualMarker};

pub const SCHEMA_VERSION: u64 = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProjectError {
    #[error("I/O failure: {0}")]
    Io(String),
    #[error("malformed document: {0}")]
    Parse(String),
    #[error("unsupported schema_version {0}")]
    Schema(String),
    #[error("{path}: {reason}")]
    Validation { path: String, reason: String },
}

impl ProjectError {
    fn invalid(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::Validation { path: path.into(), reason: reason.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRef {
    /// Content hash of the uploaded image.
    pub blob: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanPoint {
    pub x: f64,
    pub y: f64,
}

/// A floor plan used as a backdrop when placing cameras.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Floorplan {
    pub image: String,
    pub meters_per_pixel: f64,
    /// World position of the plan image's top-left pixel, meters.
    pub origin: PlanPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRecord {
    pub id: String,
    pub image: ImageRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distortion: Option<DistortionModel>,
    /// Stage-1 primitives, in undistorted coordinates when `distortion` is
    /// set (polylines excepted).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation: Option<AnnotationSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partial: Option<PartialCalibration>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub placement: Option<PlacementTransform>,
}

impl CameraRecord {
    pub fn new(id: impl Into<String>, image: ImageRef) -> Self {
        Self {
            id: id.into(),
            image,
            distortion: None,
            annotation: None,
            partial: None,
            placement: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Project {
    pub name: String,
    pub floorplan: Option<Floorplan>,
    #[serde(default)]
    pub cameras: Vec<CameraRecord>,
    #[serde(default)]
    pub markers: Vec<VirtualMarker>,
}

#[derive(Serialize)]
struct Document<'a> {
    schema_version: u64,
    #[serde(flatten)]
    project: &'a Project,
}

impl Project {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), ..Default::default() }
    }

    pub fn camera(&self, id: &str) -> Option<&CameraRecord> {
        self.cameras.iter().find(|c| c.id == id)
    }

    pub fn camera_mut(&mut self, id: &str) -> Option<&mut CameraRecord> {
        self.cameras.iter_mut().find(|c| c.id == id)
    }

    pub fn validate(&self) -> Result<(), ProjectError> {
        if let Some(plan) = &self.floorplan {
            if !(plan.meters_per_pixel > 0.0 && plan.meters_per_pixel.is_finite()) {
                return Err(ProjectError::invalid("floorplan.meters_per_pixel", "must be positive"));
            }
            if !(plan.origin.x.is_finite() && plan.origin.y.is_finite()) {
                return Err(ProjectError::invalid("floorplan.origin", "must be finite"));
            }
        }
        let mut ids = BTreeSet::new();
        for (i, c) in self.cameras.iter().enumerate() {
            let path = format!("cameras[{i}]");
            if c.id.is_empty() {
                return Err(ProjectError::invalid(format!("{path}.id"), "must not be empty"));
            }
            if !ids.insert(c.id.as_str()) {
                return Err(ProjectError::invalid(format!("{path}.id"), format!("duplicate camera id {:?}", c.id)));
            }
            validate_camera(c, &path)?;
        }
        let mut ids = BTreeSet::new();
        for (i, m) in self.markers.iter().enumerate() {
            let path = format!("markers[{i}]");
            m.validate().map_err(|e| ProjectError::invalid(&path, e.to_string()))?;
            if !ids.insert(m.id.as_str()) {
                return Err(ProjectError::invalid(format!("{path}.id"), format!("duplicate marker id {:?}", m.id)));
            }
        }
        Ok(())
    }
}

fn validate_camera(c: &CameraRecord, path: &str) -> Result<(), ProjectError> {
    let who = format!("camera {:?}", c.id);
    if c.image.width == 0 || c.image.height == 0 {
        return Err(ProjectError::invalid(format!("{path}.image"), "dimensions must be positive"));
    }
    if let Some(d) = &c.distortion {
        d.validate()
            .map_err(|e| ProjectError::invalid(format!("{path}.distortion"), e.to_string()))?;
    }
    if let Some(a) = &c.annotation {
        a.validate(c.image.width, c.image.height).map_err(|e| match e {
            AnnotationError::Invalid { field, reason } => {
                ProjectError::invalid(format!("{path}.annotation.{field}"), reason)
            }
            AnnotationError::DegenerateLines(reason) => {
                ProjectError::invalid(format!("{path}.annotation.vertical_lines"), reason)
            }
        })?;
    }
    if let Some(p) = &c.partial {
        if c.annotation.is_none() {
            return Err(ProjectError::invalid(
                format!("{path}.partial"),
                format!("{who} has a partial calibration but no annotation"),
            ));
        }
        if (p.image_width, p.image_height) != (c.image.width, c.image.height) {
            return Err(ProjectError::invalid(format!("{path}.partial"), "image dimensions differ from the camera's"));
        }
        if !(p.focal > 0.0 && p.focal.is_finite() && p.roll.is_finite() && p.pitch.is_finite()) {
            return Err(ProjectError::invalid(format!("{path}.partial"), "parameters out of range"));
        }
        if !(p.pitch.abs() < std::f64::consts::FRAC_PI_2 + 1e-12) {
            return Err(ProjectError::invalid(format!("{path}.partial.pitch"), "must lie within (-pi/2, pi/2)"));
        }
    }
    if let Some(t) = &c.placement {
        if c.partial.is_none() {
            return Err(ProjectError::invalid(
                format!("{path}.placement"),
                format!("{who} has a placement but no partial calibration"),
            ));
        }
        t.validate()
            .map_err(|e| ProjectError::invalid(format!("{path}.placement"), e.to_string()))?;
    }
    Ok(())
}

/// Serializes a validated project into its canonical document text.
pub fn to_document(p: &Project) -> Result<String, ProjectError> {
    p.validate()?;
    Ok(canonical::to_string_pretty(&Document { schema_version: SCHEMA_VERSION, project: p }))
}

/// Parses, migrates and validates document text.
pub fn from_document(text: &str) -> Result<Project, ProjectError> {
    let mut v: Value = serde_json::from_str(text).map_err(|e| ProjectError::Parse(e.to_string()))?;
    let obj = v
        .as_object_mut()
        .ok_or_else(|| ProjectError::Parse("document must be a JSON object".into()))?;
    let version = obj
        .remove("schema_version")
        .ok_or_else(|| ProjectError::Schema("missing".into()))?;
    match version.as_u64() {
        Some(1) => migrate_v1(&mut v)?,
        Some(SCHEMA_VERSION) => {}
        _ => return Err(ProjectError::Schema(version.to_string())),
    }
    let project: Project = serde_path_to_error::deserialize(v).map_err(|e| {
        let path = e.path().to_string();
        ProjectError::invalid(path, e.into_inner().to_string())
    })?;
    project.validate()?;
    Ok(project)
}

pub fn save_project(p: &Project, destination: &Path) -> Result<(), ProjectError> {
    let text = to_document(p)?;
    write_atomic(destination, text.as_bytes())
}

pub fn load_project(source: &Path) -> Result<Project, ProjectError> {
    let text = std::fs::read_to_string(source).map_err(|e| ProjectError::Io(format!("{}: {e}", source.display())))?;
    from_document(&text)
}

/// Writes through a temporary sibling file so readers never see a partial
/// document.
pub(crate) fn write_atomic(destination: &Path, bytes: &[u8]) -> Result<(), ProjectError> {
    let io = |e: std::io::Error| ProjectError::Io(format!("{}: {e}", destination.display()));
    let mut tmp = destination.as_os_str().to_owned();
    tmp.push(".tmp");
    std::fs::write(&tmp, bytes).map_err(io)?;
    std::fs::rename(&tmp, destination).map_err(io)
}

/// Version 1 kept image fields flat on the camera, had no markers list and
/// cached stage-1 results without image size or annotation digest.
fn migrate_v1(v: &mut Value) -> Result<(), ProjectError> {
    let bad = |path: String, reason: &str| ProjectError::invalid(path, reason);
    let obj = v.as_object_mut().expect("checked by caller");
    obj.entry("markers").or_insert_with(|| Value::Array(vec![]));
    obj.entry("floorplan").or_insert(Value::Null);
    let Some(cameras) = obj.get_mut("cameras").and_then(Value::as_array_mut) else {
        return Ok(());
    };
    for (i, cam) in cameras.iter_mut().enumerate() {
        let cam = cam
            .as_object_mut()
            .ok_or_else(|| bad(format!("cameras[{i}]"), "must be an object"))?;
        let blob = cam.remove("image_blob").unwrap_or(Value::String(String::new()));
        let width = cam.remove("image_width").unwrap_or(Value::Null);
        let height = cam.remove("image_height").unwrap_or(Value::Null);
        cam.insert(
            "image".into(),
            serde_json::json!({"blob": blob, "width": width, "height": height}),
        );
        if let Some(Value::Object(partial)) = cam.get("partial").cloned() {
            let annotation: AnnotationSet = match cam.get("annotation") {
                Some(a) => serde_json::from_value(a.clone())
                    .map_err(|e| bad(format!("cameras[{i}].annotation"), &e.to_string()))?,
                None => return Err(bad(format!("cameras[{i}].partial"), "partial calibration without annotation")),
            };
            let mut partial = partial;
            partial.insert("image_width".into(), width);
            partial.insert("image_height".into(), height);
            partial.insert("annotation_digest".into(), Value::String(annotation.digest()));
            cam.insert("partial".into(), Value::Object(partial));
        }
    }
    Ok(())
}

/// The first calibration stage a camera record still lacks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Annotation,
    Placement,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Annotation => "annotation",
            Stage::Placement => "placement",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DeriveError {
    #[error("incomplete: missing {0}")]
    Incomplete(Stage),
    #[error(transparent)]
    Stage1(#[from] Stage1Error),
    #[error(transparent)]
    Stage2(#[from] Stage2Error),
}

/// Stage-1 result for a record: the cached one when it was computed from
/// the stored annotation, otherwise solved afresh.
pub fn current_partial(c: &CameraRecord) -> Result<PartialCalibration, DeriveError> {
    let annotation = c.annotation.as_ref().ok_or(DeriveError::Incomplete(Stage::Annotation))?;
    if let Some(p) = &c.partial {
        if p.annotation_digest == annotation.digest() && (p.image_width, p.image_height) == (c.image.width, c.image.height) {
            return Ok(p.clone());
        }
    }
    Ok(canonical::round_trip(&solve_partial(annotation, c.image.width, c.image.height)?))
}

/// Full camera model from the record's annotation, stage-1 result and
/// placement.
pub fn derive_model(c: &CameraRecord) -> Result<CameraModel, DeriveError> {
    if c.annotation.is_none() {
        return Err(DeriveError::Incomplete(Stage::Annotation));
    }
    let placement = c.placement.as_ref().ok_or(DeriveError::Incomplete(Stage::Placement))?;
    let partial = current_partial(c)?;
    Ok(assemble_full_calibration(&partial, &apply_placement(&partial, placement))?)
}
